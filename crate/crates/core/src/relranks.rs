//! The three-step relative-ranks problem.
//!
//! Only the ranks of `S_k` among `S_0..S_k` are observed. The law of the
//! ordering of `(S_0, .., S_3)` depends on the step distribution through the
//! single number `p = P(0 < X_1 < X_2 < X_3 < X_1 + X_2)`; its complement
//! within `P(0 < X_1 < X_2 < X_3) = 1/48` is `q`.

use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::distributions::{SymmetricDistribution, TAIL_TRUNCATION};
use crate::numerics::{integrate_2d, QuadratureConfig};
use crate::walk::{Decision, RankPolicy, StoppingPolicy};
use crate::{Error, Result};

/// `p + q`.
pub const PQ_TOTAL: f64 = 1.0 / 48.0;
/// Tolerance on `p + q = 1/48` for externally supplied parameters.
pub const PQ_SUM_TOLERANCE: f64 = 1e-9;

pub fn pq_total() -> Rational64 {
    Rational64::new(1, 48)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PqMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqParams {
    pub p: f64,
    pub q: f64,
    pub method: PqMethod,
    pub error_bound: f64,
}

impl PqParams {
    /// Validated parameters. `p = 0` is rejected: no continuous symmetric
    /// law attains it.
    pub fn new(p: f64, q: f64, method: PqMethod, error_bound: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && error_bound >= 0.0) {
            return Err(Error::InvalidPq(format!("non-finite p = {p}, q = {q} or bound")));
        }
        if !(p > 0.0) {
            return Err(Error::InvalidPq(format!("p must be positive, got {p}")));
        }
        if q < 0.0 {
            return Err(Error::InvalidPq(format!("q must be nonnegative, got {q}")));
        }
        let tol = error_bound.max(PQ_SUM_TOLERANCE);
        if (p + q - PQ_TOTAL).abs() > tol {
            return Err(Error::InvalidPq(format!("p + q = {} differs from 1/48", p + q)));
        }
        Ok(Self { p, q, method, error_bound })
    }

    /// Parameters given by `p` alone, with `q = 1/48 - p`.
    pub fn from_p(p: f64) -> Result<Self> {
        Self::new(p, PQ_TOTAL - p, PqMethod::ClosedForm, 0.0)
    }

    /// Which optimal rule applies; `p` and `q` within the error bound of
    /// each other count as equal and select rule (a).
    pub fn branch(&self) -> RuleBranch {
        if self.p <= self.q + self.error_bound.max(1e-12) {
            RuleBranch::A
        } else {
            RuleBranch::B
        }
    }

    pub fn value(&self) -> f64 {
        relranks_value(self.p)
    }

    pub fn policy(&self) -> StoppingPolicy {
        StoppingPolicy::ranks(RelativeRankRule::new(self.branch()))
    }
}

/// `q = (1/16) int_0^1 int_0^1 {1 - G(G^-1(u) + G^-1(v))} du dv` and
/// `p = (1/8) int int_{u < v} {G(G^-1(u) + G^-1(v)) - v} du dv` for the folded
/// law `G`, as two independent quadratures. Their sum is checked against
/// `1/48`.
pub fn compute_pq(dist: &SymmetricDistribution, quad: &QuadratureConfig) -> Result<PqParams> {
    // Integrate over folded tail masses s = 1 - u, so G^-1 becomes an
    // inverse tail and 1 - G(x) is 2 * tail(x).
    let xq = |s: f64| dist.folded_quantile_from_tail(s);
    let (_, upper) = dist.support_hint();
    let eps = TAIL_TRUNCATION;
    let inner = quad.tightened(1e-2);
    // where x_s + x_t reaches the support edge, as a tail mass t
    let edge = |s: f64| -> Option<f64> {
        let room = upper - xq(s);
        (upper.is_finite() && room > 0.0).then(|| 2.0 * dist.upper_tail(room))
    };
    let q_est = integrate_2d(
        |s, t| 2.0 * dist.upper_tail(xq(s) + xq(t)),
        (eps, 1.0 - eps),
        (eps, 1.0 - eps),
        |s| edge(s).into_iter().collect(),
        quad,
        &inner,
    )?;
    // triangle t < s, with t = s * w
    let p_est = integrate_2d(
        |s, w| {
            let t = s * w;
            s * (t - 2.0 * dist.upper_tail(xq(s) + xq(t)))
        },
        (eps, 1.0 - eps),
        (0.0, 1.0),
        |s| edge(s).map(|t| t / s).into_iter().collect(),
        quad,
        &inner,
    )?;
    let q = (q_est.value / 16.0).max(0.0);
    let p = p_est.value / 8.0;
    let error_bound = q_est.error / 16.0 + p_est.error / 8.0 + eps;
    if !(p > 0.0) {
        return Err(Error::InvalidPq(format!("quadrature gave p = {p} (q = {q})")));
    }
    PqParams::new(p, q, PqMethod::Quadrature, error_bound)
}

/// Grid check of the necessary condition `F(x) - F(0) >= F(x + y) - F(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassUReport {
    pub member: bool,
    pub pairs_checked: usize,
    pub violations: usize,
    /// `(x, y, excess)` for the largest violation found.
    pub worst: Option<(f64, f64, f64)>,
}

pub fn class_u_membership_check(dist: &SymmetricDistribution, grid: &[(f64, f64)]) -> ClassUReport {
    let mut violations = 0;
    let mut worst: Option<(f64, f64, f64)> = None;
    for &(x, y) in grid {
        let excess = (dist.cdf(x + y) - dist.cdf(y)) - (dist.cdf(x) - 0.5);
        if excess > 1e-12 {
            violations += 1;
            if worst.is_none_or(|w| excess > w.2) {
                worst = Some((x, y, excess));
            }
        }
    }
    ClassUReport { member: violations == 0, pairs_checked: grid.len(), violations, worst }
}

/// `side x side` pairs on `(0, upper]^2`, with `upper` the support edge or
/// a far quantile.
pub fn default_class_u_grid(dist: &SymmetricDistribution, side: usize) -> Vec<(f64, f64)> {
    let h = dist.grid_upper(1e-6) / side as f64;
    let mut grid = Vec::with_capacity(side * side);
    for i in 1..=side {
        for j in 1..=side {
            grid.push((i as f64 * h, j as f64 * h));
        }
    }
    grid
}

/// A probability `constant + p_coef * p + q_coef * q`, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbExpr {
    pub constant: Rational64,
    pub p_coef: Rational64,
    pub q_coef: Rational64,
}

impl ProbExpr {
    pub const ZERO: ProbExpr = ProbExpr {
        constant: Rational64::new_raw(0, 1),
        p_coef: Rational64::new_raw(0, 1),
        q_coef: Rational64::new_raw(0, 1),
    };

    pub fn constant(n: i64, d: i64) -> Self {
        Self { constant: Rational64::new(n, d), ..Self::ZERO }
    }

    fn linear(n: i64, d: i64, p: i64, q: i64) -> Self {
        Self {
            constant: Rational64::new(n, d),
            p_coef: Rational64::from_integer(p),
            q_coef: Rational64::from_integer(q),
        }
    }

    pub fn eval(&self, p: f64, q: f64) -> f64 {
        to_f64(self.constant) + to_f64(self.p_coef) * p + to_f64(self.q_coef) * q
    }

    pub fn eval_exact(&self, p: Rational64, q: Rational64) -> Rational64 {
        self.constant + self.p_coef * p + self.q_coef * q
    }

    /// The same expression with `q = 1/48 - p` substituted.
    pub fn in_p(&self) -> Self {
        Self {
            constant: self.constant + self.q_coef * pq_total(),
            p_coef: self.p_coef - self.q_coef,
            q_coef: Rational64::from_integer(0),
        }
    }

    pub fn scale(&self, k: Rational64) -> Self {
        Self { constant: self.constant * k, p_coef: self.p_coef * k, q_coef: self.q_coef * k }
    }
}

impl std::ops::Add for ProbExpr {
    type Output = ProbExpr;
    fn add(self, o: ProbExpr) -> ProbExpr {
        ProbExpr {
            constant: self.constant + o.constant,
            p_coef: self.p_coef + o.p_coef,
            q_coef: self.q_coef + o.q_coef,
        }
    }
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if *self.constant.numer() != 0 {
            parts.push(self.constant.to_string());
        }
        for (c, name) in [(self.p_coef, "p"), (self.q_coef, "q")] {
            if *c.numer() != 0 {
                if c == Rational64::from_integer(1) {
                    parts.push(name.to_string());
                } else {
                    parts.push(format!("{c}{name}"));
                }
            }
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

pub(crate) fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// One strict ordering of `S_0..S_3` with its probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationEntry {
    /// Walk times from highest position to lowest.
    pub ordering: [usize; 4],
    /// Row of the listed table (1-based); reflections share the row.
    pub row: usize,
    pub reflected: bool,
    pub probability: ProbExpr,
}

impl PermutationEntry {
    /// Overall rank `R_k` of each time `k`.
    pub fn overall_ranks(&self) -> [usize; 4] {
        let mut r = [0; 4];
        for (pos, &k) in self.ordering.iter().enumerate() {
            r[k] = pos + 1;
        }
        r
    }

    /// Relative ranks `R~_0..R~_3`.
    pub fn relative_ranks(&self) -> [usize; 4] {
        relative_ranks_of(&self.ordering)
    }

    /// `"S2>0>S3>S1"` style label.
    pub fn label(&self) -> String {
        ordering_label(&self.ordering)
    }
}

pub(crate) fn relative_ranks_of(ordering: &[usize]) -> [usize; 4] {
    let mut out = [0; 4];
    for k in 0..ordering.len() {
        let pos = ordering.iter().position(|&t| t == k).expect("permutation");
        out[k] = 1 + ordering[..pos].iter().filter(|&&t| t < k).count();
    }
    out
}

pub(crate) fn ordering_label(ordering: &[usize]) -> String {
    ordering
        .iter()
        .map(|&t| if t == 0 { "0".to_string() } else { format!("S{t}") })
        .collect::<Vec<_>>()
        .join(">")
}

// Listed orderings, highest time first, and their probabilities.
const ROWS: [([usize; 4], (i64, i64, i64, i64)); 12] = [
    ([0, 1, 2, 3], (1, 8, 0, 0)),
    ([0, 1, 3, 2], (1, 16, 0, 0)),
    ([0, 2, 1, 3], (1, 24, 0, 0)),
    ([0, 2, 3, 1], (1, 48, 0, 0)),
    ([0, 3, 1, 2], (1, 48, 2, 0)),
    ([0, 3, 2, 1], (0, 1, 0, 2)),
    ([2, 0, 1, 3], (1, 48, 0, 0)),
    ([2, 0, 3, 1], (0, 1, 2, 0)),
    ([2, 3, 0, 1], (0, 1, 0, 2)),
    ([3, 0, 1, 2], (0, 1, 0, 2)),
    ([3, 0, 2, 1], (1, 48, 2, 0)),
    ([3, 2, 0, 1], (1, 16, 0, 0)),
];

/// Probabilities of all 24 orderings of `(S_0, S_1, S_2, S_3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationTable {
    entries: Vec<PermutationEntry>,
    p: f64,
    q: f64,
}

impl PermutationTable {
    /// The symbolic table, listed rows first and then their reflections.
    pub fn symbolic() -> Vec<PermutationEntry> {
        let mut entries = Vec::with_capacity(24);
        for reflected in [false, true] {
            for (i, (ordering, (n, d, p, q))) in ROWS.iter().enumerate() {
                let mut ordering = *ordering;
                if reflected {
                    ordering.reverse();
                }
                entries.push(PermutationEntry {
                    ordering,
                    row: i + 1,
                    reflected,
                    probability: ProbExpr::linear(*n, *d, *p, *q),
                });
            }
        }
        entries
    }

    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p >= 0.0 && q >= 0.0) || (p + q - PQ_TOTAL).abs() > PQ_SUM_TOLERANCE {
            return Err(Error::InvalidPq(format!(
                "the ordering table needs p, q >= 0 with p + q = 1/48 (got p = {p}, q = {q})"
            )));
        }
        Ok(Self { entries: Self::symbolic(), p, q })
    }

    pub fn from_params(pq: &PqParams) -> Result<Self> {
        Self::new(pq.p, pq.q)
    }

    pub fn entries(&self) -> &[PermutationEntry] {
        &self.entries
    }

    pub fn probability(&self, entry: &PermutationEntry) -> f64 {
        entry.probability.eval(self.p, self.q)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| self.probability(e)).collect()
    }

    /// Index of an ordering given highest-first.
    pub fn index_of(&self, ordering: &[usize]) -> Option<usize> {
        self.entries.iter().position(|e| e.ordering[..] == *ordering)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p,
            "q": self.q,
            "entries": self.entries.iter().map(|e| serde_json::json!({
                "row": e.row,
                "reflected": e.reflected,
                "ordering": e.label(),
                "expression": e.probability.to_string(),
                "probability": self.probability(e),
            })).collect::<Vec<_>>(),
        })
    }

    /// CSV in listed-row order, each row followed by its reflection.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,ordering,reflected_ordering,expression,probability\n");
        for e in self.entries.iter().filter(|e| !e.reflected) {
            let mut rev = e.ordering;
            rev.reverse();
            out.push_str(&format!(
                "{},{},{},{},{:.12}\n",
                e.row,
                e.label(),
                ordering_label(&rev),
                e.probability,
                self.probability(e)
            ));
        }
        out
    }
}

/// The optimal value `min{55/24, 109/48 + 2p}`; defined down to `p = 0`.
pub fn relranks_value(p: f64) -> f64 {
    (55.0 / 24.0f64).min(109.0 / 48.0 + 2.0 * p)
}

pub fn relranks_value_exact(p: Rational64) -> Rational64 {
    let a = Rational64::new(55, 24);
    let b = Rational64::new(109, 48) + Rational64::from_integer(2) * p;
    a.min(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleBranch {
    /// `p <= q`: after a down first step, stop once `S_2 > S_1`.
    #[serde(rename = "a")]
    A,
    /// `p > q`: after a down first step, stop only at a new maximum.
    #[serde(rename = "b")]
    B,
}

impl fmt::Display for RuleBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleBranch::A => "a",
            RuleBranch::B => "b",
        })
    }
}

/// The optimal three-step relative-ranks rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelativeRankRule {
    pub branch: RuleBranch,
}

impl RelativeRankRule {
    pub fn new(branch: RuleBranch) -> Self {
        Self { branch }
    }
}

impl RankPolicy for RelativeRankRule {
    fn horizon(&self) -> Option<usize> {
        Some(3)
    }

    fn decide(&self, k: usize, ranks: &[usize]) -> Decision {
        match k {
            0 => Decision::Continue,
            1 => Decision::stop_if(ranks[1] == 1),
            2 => match self.branch {
                RuleBranch::A => Decision::stop_if(ranks[2] <= 2),
                RuleBranch::B => Decision::stop_if(ranks[2] == 1),
            },
            _ => Decision::Stop,
        }
    }
}

/// One ordering of `(S_0, S_1, S_2)` after two steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseValue {
    pub case: usize,
    pub ordering: String,
    pub probability: f64,
    /// `E(R_2 | G_2)`.
    pub stop_value: f64,
    /// `E(R_3 | G_2)`, as a string in `p` alone.
    pub continuation_expr: String,
    pub continuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub p: f64,
    pub q: f64,
    pub cases: Vec<CaseValue>,
    /// `W~_1` after an up first step under rule (a) and rule (b).
    pub up_continuation_a: f64,
    pub up_continuation_b: f64,
    /// `V~_1` after a down first step under rule (a) and rule (b).
    pub down_value_a: f64,
    pub down_value_b: f64,
}

/// Orderings of `(S_0, S_1, S_2)` in the conventional case order.
pub const CASE_ORDERINGS: [[usize; 3]; 6] =
    [[2, 1, 0], [1, 2, 0], [1, 0, 2], [2, 0, 1], [0, 2, 1], [0, 1, 2]];

/// Conditional probability and `E(R_3 | G_2)` for one two-step case, exact.
pub fn case_continuation(case: usize) -> (Rational64, ProbExpr) {
    let target = CASE_ORDERINGS[case - 1];
    let mut mass = ProbExpr::ZERO;
    let mut weighted = ProbExpr::ZERO;
    for e in PermutationTable::symbolic() {
        let restricted: Vec<usize> = e.ordering.iter().copied().filter(|&t| t < 3).collect();
        if restricted[..] == target[..] {
            mass = mass + e.probability;
            let r3 = e.overall_ranks()[3] as i64;
            weighted = weighted + e.probability.scale(Rational64::from_integer(r3));
        }
    }
    // the mass of a two-step ordering does not depend on p
    let mass = mass.in_p();
    debug_assert_eq!(*mass.p_coef.numer(), 0);
    (mass.constant, weighted.in_p().scale(mass.constant.recip()))
}

pub fn case_values(p: f64, q: f64) -> Result<CaseReport> {
    PermutationTable::new(p, q)?;
    let mut cases = Vec::with_capacity(6);
    for case in 1..=6 {
        let (mass, cont) = case_continuation(case);
        let ordering = CASE_ORDERINGS[case - 1];
        let r2 = 1 + ordering.iter().position(|&t| t == 2).unwrap();
        cases.push(CaseValue {
            case,
            ordering: ordering_label(&ordering),
            probability: to_f64(mass),
            stop_value: r2 as f64 + 0.5,
            continuation_expr: cont.to_string(),
            continuation: cont.eval(p, q),
        });
    }
    let v = |i: usize, stop: bool| {
        let c = &cases[i - 1];
        if stop {
            c.stop_value
        } else {
            c.continuation
        }
    };
    // cases 1-3 follow S_1 > 0 with conditional weights 1/2, 1/4, 1/4;
    // cases 4-6 follow S_1 < 0 with weights 1/4, 1/4, 1/2
    Ok(CaseReport {
        p,
        q,
        up_continuation_a: 0.5 * v(1, true) + 0.25 * v(2, false) + 0.25 * v(3, false),
        up_continuation_b: 0.5 * v(1, true) + 0.25 * v(2, true) + 0.25 * v(3, false),
        down_value_a: 0.25 * v(4, true) + 0.25 * v(5, true) + 0.5 * v(6, false),
        down_value_b: 0.25 * v(4, true) + 0.25 * v(5, false) + 0.5 * v(6, false),
        cases,
    })
}
