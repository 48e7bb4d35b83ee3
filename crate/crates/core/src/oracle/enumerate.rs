use std::collections::BTreeSet;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::relranks::{pq_total, PermutationTable};
use crate::walk::{Decision, RankPolicy};
use crate::{Error, Result};

/// Largest horizon for which ordering probabilities are known exactly.
pub const MAX_ENUMERATION_HORIZON: usize = 3;

/// A deterministic relative-rank policy as a lookup table.
///
/// `stop` lists the rank histories `(R~_1, .., R~_k)` after which the policy
/// stops; the empty history means stopping at time 0. Stopping at the
/// horizon is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankPolicyTable {
    horizon: usize,
    stop: BTreeSet<Vec<usize>>,
}

impl RankPolicyTable {
    pub fn new(horizon: usize, stop: impl IntoIterator<Item = Vec<usize>>) -> Result<Self> {
        let t = Self { horizon, stop: stop.into_iter().collect() };
        t.validate()?;
        Ok(t)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidPolicy("horizon must be at least 1".into()));
        }
        for h in &self.stop {
            if h.len() >= self.horizon {
                return Err(Error::InvalidPolicy(format!(
                    "history {h:?} has length {} but the horizon is {} (stopping at the horizon is implicit)",
                    h.len(),
                    self.horizon
                )));
            }
            if let Some((i, r)) = h.iter().enumerate().find(|&(i, &r)| r == 0 || r > i + 2) {
                return Err(Error::InvalidPolicy(format!(
                    "history {h:?}: relative rank {r} at time {} must lie in 1..={}",
                    i + 1,
                    i + 2
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stop_histories(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.stop.iter()
    }

    fn stops_after(&self, history: &[usize]) -> bool {
        self.stop.contains(history)
    }

    /// The same policy with unreachable entries (those below an earlier
    /// stop) removed. Two tables act identically iff their canonical forms
    /// are equal.
    pub fn canonical(&self) -> Self {
        let stop = self
            .stop
            .iter()
            .filter(|h| (0..h.len()).all(|k| !self.stop.contains(&h[..k])))
            .cloned()
            .collect();
        Self { horizon: self.horizon, stop }
    }

    /// Every history a table can mention, in order of time.
    pub fn all_histories(horizon: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for k in 1..horizon {
            let mut next = Vec::new();
            for h in &frontier {
                for r in 1..=k + 1 {
                    let mut e: Vec<usize> = h.clone();
                    e.push(r);
                    next.push(e);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }
}

impl RankPolicy for RankPolicyTable {
    fn horizon(&self) -> Option<usize> {
        Some(self.horizon)
    }

    fn decide(&self, k: usize, ranks: &[usize]) -> Decision {
        Decision::stop_if(k >= self.horizon || self.stops_after(&ranks[1..=k]))
    }
}

/// Every strict ordering of `S_0..S_n`, highest time first, with its exact
/// probability when `p = P(0 < X_1 < X_2 < X_3 < X_1 + X_2)`.
pub fn ordering_distribution(horizon: usize, p: Rational64) -> Result<Vec<(Vec<usize>, Rational64)>> {
    match horizon {
        1 | 2 => {
            // Cells: one sign per step and, for two steps, which magnitude
            // is larger. All cells are equally likely for symmetric steps.
            let magnitudes: &[&[f64]] = if horizon == 1 { &[&[1.0]] } else { &[&[1.0, 2.0], &[2.0, 1.0]] };
            let cells = magnitudes.len() << horizon;
            let mut out: Vec<(Vec<usize>, Rational64)> = Vec::new();
            for mag in magnitudes {
                for signs in 0..1usize << horizon {
                    let mut sums = vec![0.0];
                    for (i, m) in mag.iter().enumerate() {
                        let x = if signs >> i & 1 == 1 { -m } else { *m };
                        sums.push(sums[i] + x);
                    }
                    let mut order: Vec<usize> = (0..=horizon).collect();
                    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]));
                    let w = Rational64::new(1, cells as i64);
                    match out.iter_mut().find(|(o, _)| *o == order) {
                        Some(slot) => slot.1 += w,
                        None => out.push((order, w)),
                    }
                }
            }
            Ok(out)
        }
        3 => {
            let zero = Rational64::from_integer(0);
            if p < zero || p > pq_total() {
                return Err(Error::InvalidPq(format!("p = {p} outside [0, 1/48]")));
            }
            let q = pq_total() - p;
            Ok(PermutationTable::symbolic()
                .into_iter()
                .map(|e| (e.ordering.to_vec(), e.probability.eval_exact(p, q)))
                .collect())
        }
        n => Err(Error::InvalidConfig(format!(
            "exact ordering probabilities are available for horizons 1..={MAX_ENUMERATION_HORIZON}, not {n}"
        ))),
    }
}

fn ranks_of_ordering(ordering: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = ordering.len();
    let mut overall = vec![0; n];
    let mut relative = vec![0; n];
    for (pos, &k) in ordering.iter().enumerate() {
        overall[k] = pos + 1;
        relative[k] = 1 + ordering[..pos].iter().filter(|&&t| t < k).count();
    }
    (overall, relative)
}

fn expected_rank(
    policy: &dyn RankPolicy,
    dist: &[(Vec<usize>, Rational64, Vec<usize>, Vec<usize>)],
) -> Result<Rational64> {
    let mut total = Rational64::from_integer(0);
    for (_, prob, overall, relative) in dist {
        let n = overall.len() - 1;
        let tau = (0..=n)
            .find(|&k| policy.decide(k, &relative[..=k]) == Decision::Stop)
            .ok_or_else(|| Error::PolicyContract(format!("policy continued past the horizon n = {n}")))?;
        total += *prob * Rational64::from_integer(overall[tau] as i64);
    }
    Ok(total)
}

fn annotated(horizon: usize, p: Rational64) -> Result<Vec<(Vec<usize>, Rational64, Vec<usize>, Vec<usize>)>> {
    Ok(ordering_distribution(horizon, p)?
        .into_iter()
        .map(|(o, w)| {
            let (overall, relative) = ranks_of_ordering(&o);
            (o, w, overall, relative)
        })
        .collect())
}

/// Exact `E(R_tau)` of any relative-rank policy.
pub fn evaluate_policy_exact(policy: &dyn RankPolicy, horizon: usize, p: Rational64) -> Result<Rational64> {
    expected_rank(policy, &annotated(horizon, p)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumerationResult {
    pub horizon: usize,
    pub p: Option<String>,
    pub policies_evaluated: usize,
    #[serde(serialize_with = "ser_rational")]
    pub optimum: Rational64,
    pub optimum_f64: f64,
    /// Distinct (canonical) optimal tables.
    pub minimizers: Vec<RankPolicyTable>,
}

fn ser_rational<S: serde::Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl EnumerationResult {
    pub fn is_minimizer(&self, policy: &RankPolicyTable) -> bool {
        let c = policy.canonical();
        self.minimizers.contains(&c)
    }
}

/// Evaluates every decision table for the horizon and returns the exact
/// optimum with all of its minimizers. `p` is ignored below horizon 3.
pub fn enumerate_relrank_policies(horizon: usize, p: Rational64) -> Result<EnumerationResult> {
    let dist = annotated(horizon, p)?;
    let histories = RankPolicyTable::all_histories(horizon);
    let count = 1usize << histories.len();
    let mut best: Option<Rational64> = None;
    let mut minimizers: Vec<RankPolicyTable> = Vec::new();
    for mask in 0..count {
        let stop = histories
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, h)| h.clone());
        let table = RankPolicyTable { horizon, stop: stop.collect() };
        let value = expected_rank(&table, &dist)?;
        match best {
            Some(b) if value > b => {}
            Some(b) if value == b => {
                let c = table.canonical();
                if !minimizers.contains(&c) {
                    minimizers.push(c);
                }
            }
            _ => {
                best = Some(value);
                minimizers = vec![table.canonical()];
            }
        }
    }
    let optimum = best.expect("at least one policy");
    Ok(EnumerationResult {
        horizon,
        p: (horizon == 3).then(|| p.to_string()),
        policies_evaluated: count,
        optimum,
        optimum_f64: crate::relranks::to_f64(optimum),
        minimizers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relranks::{relranks_value_exact, RelativeRankRule, RuleBranch};
    use crate::walk::{StopAt, TwoStepRule};

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn two_step_orderings() {
        let d = ordering_distribution(2, r(0, 1)).unwrap();
        assert_eq!(d.len(), 6);
        let total: Rational64 = d.iter().map(|(_, w)| *w).sum();
        assert_eq!(total, r(1, 1));
        let up = d.iter().find(|(o, _)| *o == vec![2, 1, 0]).unwrap();
        assert_eq!(up.1, r(1, 4));
    }

    #[test]
    fn two_step_orderings_are_table_marginals() {
        let p = r(1, 150);
        let three = ordering_distribution(3, p).unwrap();
        for (o, w) in ordering_distribution(2, p).unwrap() {
            let m: Rational64 = three
                .iter()
                .filter(|(full, _)| full.iter().copied().filter(|&t| t < 3).collect::<Vec<_>>() == o)
                .map(|(_, w)| *w)
                .sum();
            assert_eq!(m, w, "{o:?}");
        }
    }

    #[test]
    fn two_step_optimum() {
        let res = enumerate_relrank_policies(2, r(0, 1)).unwrap();
        assert_eq!(res.optimum, r(15, 8));
        assert_eq!(res.policies_evaluated, 8);
        assert_eq!(res.minimizers.len(), 1);
        assert_eq!(evaluate_policy_exact(&TwoStepRule, 2, r(0, 1)).unwrap(), r(15, 8));
        let thm1 = RankPolicyTable::new(2, [vec![1]]).unwrap();
        assert!(res.is_minimizer(&thm1));
    }

    #[test]
    fn one_step() {
        let res = enumerate_relrank_policies(1, r(0, 1)).unwrap();
        assert_eq!(res.optimum, r(3, 2));
    }

    #[test]
    fn three_step_optimum_matches_closed_form() {
        for p in [r(1, 192), r(1, 96), r(1, 48), r(1, 100), r(1, 60)] {
            let res = enumerate_relrank_policies(3, p).unwrap();
            assert_eq!(res.policies_evaluated, 512);
            assert_eq!(res.optimum, relranks_value_exact(p), "p = {p}");
        }
    }

    #[test]
    fn rules_are_minimizers() {
        let a = RankPolicyTable::new(3, [vec![1], vec![2, 1], vec![2, 2]]).unwrap();
        let b = RankPolicyTable::new(3, [vec![1], vec![2, 1]]).unwrap();
        let res = enumerate_relrank_policies(3, r(1, 96)).unwrap();
        assert!(res.is_minimizer(&a) && res.is_minimizer(&b));
        let res = enumerate_relrank_policies(3, r(1, 192)).unwrap();
        assert!(res.is_minimizer(&a) && !res.is_minimizer(&b));
        for (branch, table) in [(RuleBranch::A, &a), (RuleBranch::B, &b)] {
            let p = r(1, 77);
            assert_eq!(
                evaluate_policy_exact(&RelativeRankRule::new(branch), 3, p).unwrap(),
                evaluate_policy_exact(table, 3, p).unwrap()
            );
        }
    }

    #[test]
    fn fixed_time_policies() {
        for k in [0, 3] {
            assert_eq!(evaluate_policy_exact(&StopAt(k), 3, r(1, 96)).unwrap(), r(5, 2));
        }
    }

    #[test]
    fn table_json() {
        let t = RankPolicyTable::from_json(r#"{"horizon":3,"stop":[[1],[2,1],[2,2]]}"#).unwrap();
        assert_eq!(RankPolicyTable::from_json(&t.to_json()).unwrap(), t);
        assert!(RankPolicyTable::from_json(r#"{"horizon":3,"stop":[[3]]}"#).is_err());
        assert!(RankPolicyTable::from_json(r#"{"horizon":2,"stop":[[1,1]]}"#).is_err());
        assert!(RankPolicyTable::from_json(r#"{"horizon":0,"stop":[]}"#).is_err());
        let redundant = RankPolicyTable::new(3, [vec![1], vec![1, 1]]).unwrap();
        assert_eq!(redundant.canonical(), RankPolicyTable::new(3, [vec![1]]).unwrap());
        assert_eq!(RankPolicyTable::all_histories(3).len(), 9);
    }
}
