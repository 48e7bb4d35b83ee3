//! Walk paths, rank bookkeeping and the stopping-policy abstraction.
//!
//! Ranks count "at least as high", self included, so the maximum has rank 1:
//! `R_k = #{i in 0..=n : S_k <= S_i}` and `R~_k = #{i in 0..=k : S_k <= S_i}`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationModel {
    FullInformation,
    RelativeRanks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Stop,
    Continue,
}

impl Decision {
    pub fn stop_if(cond: bool) -> Self {
        if cond {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }
}

/// A rule adapted to the full filtration: it sees the steps `X_1..X_k`.
pub trait FullInfoPolicy: Send + Sync {
    /// Horizon the rule was derived for, if any.
    fn horizon(&self) -> Option<usize> {
        None
    }
    /// `steps` holds exactly `X_1, ..., X_k`.
    fn decide(&self, k: usize, steps: &[f64]) -> Decision;
}

/// A rule adapted to the relative-rank filtration.
pub trait RankPolicy: Send + Sync {
    fn horizon(&self) -> Option<usize> {
        None
    }
    /// `ranks` holds exactly `R~_0, ..., R~_k`.
    fn decide(&self, k: usize, ranks: &[usize]) -> Decision;
}

/// A stopping rule under one of the two observation models. The wrapper
/// decides what the rule may see: rank rules are only ever handed ranks.
pub enum StoppingPolicy {
    FullInformation(Box<dyn FullInfoPolicy>),
    RelativeRanks(Box<dyn RankPolicy>),
}

impl StoppingPolicy {
    pub fn full<P: FullInfoPolicy + 'static>(p: P) -> Self {
        StoppingPolicy::FullInformation(Box::new(p))
    }

    pub fn ranks<P: RankPolicy + 'static>(p: P) -> Self {
        StoppingPolicy::RelativeRanks(Box::new(p))
    }

    pub fn model(&self) -> ObservationModel {
        match self {
            StoppingPolicy::FullInformation(_) => ObservationModel::FullInformation,
            StoppingPolicy::RelativeRanks(_) => ObservationModel::RelativeRanks,
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            StoppingPolicy::FullInformation(p) => p.horizon(),
            StoppingPolicy::RelativeRanks(p) => p.horizon(),
        }
    }

    /// Runs the rule on `steps`, returning `(tau, R_tau)`. `keys` orders the
    /// positions `S_0..S_n` (see [`order_keys`]); `scratch` is reused for
    /// relative ranks.
    pub(crate) fn stop_on(
        &self,
        steps: &[f64],
        keys: &[f64],
        scratch: &mut Vec<usize>,
    ) -> Result<(usize, usize)> {
        let n = steps.len();
        scratch.clear();
        for k in 0..=n {
            let decision = match self {
                StoppingPolicy::FullInformation(p) => p.decide(k, &steps[..k]),
                StoppingPolicy::RelativeRanks(p) => {
                    scratch.push(relative_rank(&keys[..=k]));
                    p.decide(k, scratch)
                }
            };
            if decision == Decision::Stop {
                return Ok((k, overall_rank(keys, k)));
            }
        }
        Err(Error::PolicyContract(format!("policy continued past the horizon n = {n}")))
    }
}

/// Stops at a fixed time regardless of what is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopAt(pub usize);

impl RankPolicy for StopAt {
    fn decide(&self, k: usize, _ranks: &[usize]) -> Decision {
        Decision::stop_if(k >= self.0)
    }
}

/// The optimal two-step rule: stop at 1 if `S_1 > 0`, otherwise at 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TwoStepRule;

impl RankPolicy for TwoStepRule {
    fn horizon(&self) -> Option<usize> {
        Some(2)
    }
    fn decide(&self, k: usize, ranks: &[usize]) -> Decision {
        match k {
            0 => Decision::Continue,
            1 => Decision::stop_if(ranks[1] == 1),
            _ => Decision::Stop,
        }
    }
}

/// Realized steps and partial sums of a walk.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    steps: Vec<f64>,
    sums: Vec<f64>,
    keys: Vec<f64>,
}

impl WalkPath {
    /// Builds the path `S_0 = 0, S_k = S_{k-1} + X_k`, rejecting tied
    /// positions and non-finite steps.
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig("a walk needs at least one step".into()));
        }
        if let Some(x) = steps.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite step {x}")));
        }
        let sums = partial_sums(&steps);
        let mut keys = vec![0.0; sums.len()];
        order_keys(&steps, &mut keys).map_err(|(i, j)| Error::TiedPositions(i, j))?;
        Ok(Self { steps, sums, keys })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }
}

pub(crate) fn partial_sums(steps: &[f64]) -> Vec<f64> {
    let mut sums = Vec::with_capacity(steps.len() + 1);
    sums.push(0.0);
    let mut s = 0.0;
    for x in steps {
        s += x;
        sums.push(s);
    }
    sums
}

/// Sign of the exact sum of `terms`, free of rounding.
pub(crate) fn exact_sum_sign(terms: &[f64]) -> Ordering {
    let naive: f64 = terms.iter().sum();
    let mass: f64 = terms.iter().map(|t| t.abs()).sum();
    // every addition errs by at most one unit of its result's precision
    // (none at all in the subnormal range)
    if naive.abs() > 2.0 * (terms.len() + 1) as f64 * f64::EPSILON * mass {
        return naive.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
    }
    let mut stack = [0.0f64; 8];
    let mut heap = Vec::new();
    let expansion: &mut [f64] = if terms.len() <= stack.len() {
        &mut stack[..terms.len()]
    } else {
        heap.resize(terms.len(), 0.0);
        &mut heap
    };
    // nonoverlapping expansion, smallest component first
    for (len, &t) in terms.iter().enumerate() {
        let mut q = t;
        for h in expansion[..len].iter_mut() {
            let s = q + *h;
            let bv = s - q;
            let err = (q - (s - bv)) + (*h - bv);
            *h = err;
            q = s;
        }
        expansion[len] = q;
    }
    let top = expansion.iter().rev().find(|&&h| h != 0.0).copied().unwrap_or(0.0);
    top.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
}

/// Exact comparison of `S_i` with `S_j`.
fn compare_positions(steps: &[f64], i: usize, j: usize) -> Ordering {
    if i < j {
        // S_i - S_j = -(X_{i+1} + ... + X_j)
        exact_sum_sign(&steps[i..j]).reverse()
    } else {
        exact_sum_sign(&steps[j..i])
    }
}

/// Writes into `keys` (one slot per position) the number of positions
/// strictly below each `S_k`, comparing exact rather than rounded sums. Keys order the
/// positions exactly as the real-valued walk does, so rank arithmetic on them
/// is immune to absorption of small steps. Fails with the first tied pair.
pub(crate) fn order_keys(steps: &[f64], keys: &mut [f64]) -> std::result::Result<(), (usize, usize)> {
    keys.fill(0.0);
    for j in 1..keys.len() {
        for i in 0..j {
            match compare_positions(steps, i, j) {
                Ordering::Less => keys[j] += 1.0,
                Ordering::Greater => keys[i] += 1.0,
                Ordering::Equal => return Err((i, j)),
            }
        }
    }
    Ok(())
}

pub(crate) fn find_tie(positions: &[f64]) -> Option<(usize, usize)> {
    for j in 1..positions.len() {
        for i in 0..j {
            if positions[i] == positions[j] {
                return Some((i, j));
            }
        }
    }
    None
}

/// `R~_k` for `k = positions.len() - 1`.
pub(crate) fn relative_rank(positions: &[f64]) -> usize {
    let k = positions.len() - 1;
    let sk = positions[k];
    positions.iter().filter(|&&s| sk <= s).count()
}

/// `R_k` among all of `positions`.
pub(crate) fn overall_rank(positions: &[f64], k: usize) -> usize {
    let sk = positions[k];
    positions.iter().filter(|&&s| sk <= s).count()
}

/// Overall and relative ranks of every position of a walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankView {
    overall: Vec<usize>,
    relative: Vec<usize>,
}

impl RankView {
    /// Ranks of an arbitrary sequence of distinct positions.
    pub fn of_positions(positions: &[f64]) -> Result<Self> {
        if let Some((i, j)) = find_tie(positions) {
            return Err(Error::TiedPositions(i, j));
        }
        let overall = (0..positions.len()).map(|k| overall_rank(positions, k)).collect();
        let relative = (0..positions.len()).map(|k| relative_rank(&positions[..=k])).collect();
        Ok(Self { overall, relative })
    }

    /// `R_k`.
    pub fn overall_rank(&self, k: usize) -> usize {
        self.overall[k]
    }

    /// `R~_k`.
    pub fn relative_rank(&self, k: usize) -> usize {
        self.relative[k]
    }

    pub fn overall(&self) -> &[usize] {
        &self.overall
    }

    pub fn relative(&self) -> &[usize] {
        &self.relative
    }
}

pub fn compute_ranks(path: &WalkPath) -> RankView {
    RankView::of_positions(&path.keys).expect("WalkPath positions are distinct")
}

/// Applies `policy` to `path` and returns `(tau, R_tau)`.
pub fn run_policy(policy: &StoppingPolicy, path: &WalkPath) -> Result<(usize, usize)> {
    let mut scratch = Vec::with_capacity(path.horizon() + 1);
    policy.stop_on(path.steps(), &path.keys, &mut scratch)
}

/// Maps every position through `g`, checking on the evaluated points that
/// `g` is strictly increasing.
pub fn monotone_transform<G>(path: &WalkPath, g: G) -> Result<Vec<f64>>
where
    G: Fn(f64) -> f64,
{
    let mapped: Vec<f64> = path.sums().iter().map(|&s| g(s)).collect();
    let mut order: Vec<usize> = (0..mapped.len()).collect();
    order.sort_by(|&a, &b| path.sums()[a].total_cmp(&path.sums()[b]));
    let increasing = order.windows(2).all(|w| mapped[w[0]] < mapped[w[1]]);
    if !increasing || mapped.iter().any(|v| v.is_nan()) {
        return Err(Error::NonMonotoneTransform);
    }
    Ok(mapped)
}
