use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::SymmetricDistribution;
use crate::fullinfo::FullInfoRule;
use crate::walk::{exact_sum_sign, Decision, FullInfoPolicy};
use crate::{Error, Result};

/// Backward induction on the walk whose steps are `m` equiprobable atoms.
#[derive(Debug, Clone, Serialize)]
pub struct GridDpResult {
    pub value: f64,
    pub atoms: usize,
    pub horizon: usize,
    /// Whether stopping at time 0 is optimal.
    pub stop_at_0: bool,
    #[serde(skip)]
    atom_values: Vec<f64>,
    #[serde(skip)]
    stop_at_1: Vec<bool>,
    /// Row-major `[j1 * m + j2]`, present for horizon 3.
    #[serde(skip)]
    stop_at_2: Vec<bool>,
}

struct Atomized {
    atoms: Vec<f64>,
    /// `future[l]`: probability that a sum of `l` atoms is `>= 0`.
    future: Vec<f64>,
    horizon: usize,
}

/// Number of atoms `a` with `a + rest < 0`, in exact arithmetic.
fn count_below(atoms: &[f64], rest: &[f64]) -> usize {
    let mut terms = [0.0f64; 4];
    terms[1..=rest.len()].copy_from_slice(rest);
    let terms = &mut terms[..=rest.len()];
    atoms.partition_point(|&a| {
        terms[0] = a;
        exact_sum_sign(terms) == Ordering::Less
    })
}

impl Atomized {
    fn new(dist: &SymmetricDistribution, m: usize, horizon: usize) -> Self {
        let mid = (m - 1) / 2;
        let mut atoms = vec![0.0; m];
        for j in mid + 1..m {
            let x = dist.quantile_unchecked((j as f64 + 0.5) / m as f64);
            atoms[j] = x;
            atoms[m - 1 - j] = -x;
        }
        let mut future = vec![0.0; horizon + 1];
        let mf = m as f64;
        // a later position tied with S_k ranks above it
        if horizon >= 1 {
            future[1] = (m - count_below(&atoms, &[])) as f64 / mf;
        }
        if horizon >= 2 {
            let c: usize = atoms.iter().map(|&a| m - count_below(&atoms, &[a])).sum();
            future[2] = c as f64 / (mf * mf);
        }
        if horizon >= 3 {
            let c: usize = atoms
                .par_iter()
                .map(|&a| atoms.iter().map(|&b| m - count_below(&atoms, &[a, b])).sum::<usize>())
                .sum();
            future[3] = c as f64 / (mf * mf * mf);
        }
        Self { atoms, future, horizon }
    }

    fn m(&self) -> usize {
        self.atoms.len()
    }

    /// Stopping value at time `k = steps.len()`.
    fn stop_value(&self, steps: &[f64]) -> f64 {
        let k = steps.len();
        // S_i > S_k iff X_{i+1} + ... + X_k < 0
        let above = (0..k).filter(|&i| exact_sum_sign(&steps[i..]) == Ordering::Less).count();
        let future: f64 = self.future[1..=self.horizon - k].iter().sum();
        (1 + above) as f64 + future
    }

    /// Expected rank of `S_n` given the first `n - 1` steps.
    fn last_step_value(&self, steps: &[f64]) -> f64 {
        // S_i > S_k + a iff a + X_{i+1} + ... + X_k < 0
        let below: usize = (0..=steps.len()).map(|i| count_below(&self.atoms, &steps[i..])).sum();
        1.0 + below as f64 / self.m() as f64
    }

    /// `V_k` after `steps` (so `k = steps.len()`), reporting each stop
    /// decision before the horizon through `record`.
    fn value(&self, steps: &mut Vec<f64>, record: &mut dyn FnMut(&[f64], bool)) -> f64 {
        let k = steps.len();
        let stop = self.stop_value(steps);
        if k == self.horizon {
            return stop;
        }
        let cont = if k + 1 == self.horizon {
            self.last_step_value(steps)
        } else {
            let mut total = 0.0;
            for &a in &self.atoms {
                steps.push(a);
                total += self.value(steps, record);
                steps.pop();
            }
            total / self.m() as f64
        };
        let stops = stop <= cont;
        record(steps, stops);
        stop.min(cont)
    }
}

/// Discretized full-information dynamic program with `m` atoms at the
/// midpoint quantiles `(j - 1/2) / m`. Positions are compared in exact
/// arithmetic and exact ties are broken in favor of the later position.
pub fn grid_dp_full_info(dist: &SymmetricDistribution, m: usize, horizon: usize) -> Result<GridDpResult> {
    if m < 101 || m.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("grid DP needs an odd atom count >= 101, got {m}")));
    }
    if !(1..=3).contains(&horizon) {
        return Err(Error::InvalidConfig(format!("grid DP supports horizons 1..=3, got {horizon}")));
    }
    let grid = Atomized::new(dist, m, horizon);
    let stop0 = grid.stop_value(&[]);

    let rows: Vec<(f64, bool, Vec<bool>)> = grid
        .atoms
        .par_iter()
        .map(|&x1| {
            let mut row = Vec::new();
            let mut stop1 = false;
            let mut steps = vec![x1];
            let v = grid.value(&mut steps, &mut |s: &[f64], stops: bool| match s.len() {
                1 => stop1 = stops,
                2 => row.push(stops),
                _ => {}
            });
            (v, stop1, row)
        })
        .collect();

    let cont0 = rows.iter().map(|r| r.0).fold(0.0, |acc, v| acc + v) / m as f64;
    let mut stop_at_1 = Vec::with_capacity(m);
    let mut stop_at_2 = Vec::with_capacity(if horizon == 3 { m * m } else { 0 });
    for (_, s1, row) in rows {
        stop_at_1.push(s1);
        stop_at_2.extend(row);
    }
    Ok(GridDpResult {
        value: stop0.min(cont0),
        atoms: m,
        horizon,
        stop_at_0: stop0 <= cont0,
        atom_values: grid.atoms,
        stop_at_1,
        stop_at_2,
    })
}

impl GridDpResult {
    pub fn atom_values(&self) -> &[f64] {
        &self.atom_values
    }

    pub fn stops_at_1(&self, j1: usize) -> bool {
        self.stop_at_1[j1]
    }

    pub fn stops_at_2(&self, j1: usize, j2: usize) -> Option<bool> {
        self.stop_at_2.get(j1 * self.atoms + j2).copied()
    }

    /// Fraction of the `(X_1, X_2)` cells reached by `rule` (those where it
    /// continues at time 1) on which the DP's time-2 decision differs.
    pub fn disagreement_with(&self, rule: &FullInfoRule) -> Result<f64> {
        if self.horizon != 3 {
            return Err(Error::InvalidConfig("time-2 decisions need horizon 3".into()));
        }
        let (mut reached, mut differ) = (0usize, 0usize);
        for (j1, &x1) in self.atom_values.iter().enumerate() {
            if rule.decide(1, &[x1]) == Decision::Stop {
                continue;
            }
            for (j2, &x2) in self.atom_values.iter().enumerate() {
                reached += 1;
                let r = rule.decide(2, &[x1, x2]) == Decision::Stop;
                if r != self.stop_at_2[j1 * self.atoms + j2] {
                    differ += 1;
                }
            }
        }
        Ok(if reached == 0 { 0.0 } else { differ as f64 / reached as f64 })
    }

    /// CSV `x1,x2,dp_stop[,rule_stop]` over every `stride`-th atom pair.
    pub fn decision_csv(&self, rule: Option<&FullInfoRule>, stride: usize) -> String {
        let stride = stride.max(1);
        let mut out = String::from(if rule.is_some() { "x1,x2,dp_stop,rule_stop\n" } else { "x1,x2,dp_stop\n" });
        if self.horizon != 3 {
            return out;
        }
        for j1 in (0..self.atoms).step_by(stride) {
            for j2 in (0..self.atoms).step_by(stride) {
                let (x1, x2) = (self.atom_values[j1], self.atom_values[j2]);
                let dp = self.stop_at_2[j1 * self.atoms + j2] as u8;
                match rule {
                    Some(r) => {
                        let rs = (r.decide(2, &[x1, x2]) == Decision::Stop) as u8;
                        out.push_str(&format!("{x1},{x2},{dp},{rs}\n"));
                    }
                    None => out.push_str(&format!("{x1},{x2},{dp}\n")),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_are_symmetric() {
        let d = SymmetricDistribution::laplace(1.0).unwrap();
        let g = Atomized::new(&d, 101, 3);
        for j in 0..101 {
            assert_eq!(g.atoms[j], -g.atoms[100 - j]);
        }
        assert_eq!(g.atoms[50], 0.0);
        assert!(g.atoms.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn one_and_two_step() {
        let d = SymmetricDistribution::uniform(1.0).unwrap();
        let one = grid_dp_full_info(&d, 201, 1).unwrap();
        assert!((one.value - 1.5).abs() < 1e-2);
        let two = grid_dp_full_info(&d, 501, 2).unwrap();
        assert!((two.value - 1.875).abs() < 1e-2);
    }

    #[test]
    fn rejects_bad_sizes() {
        let d = SymmetricDistribution::uniform(1.0).unwrap();
        assert!(grid_dp_full_info(&d, 100, 3).is_err());
        assert!(grid_dp_full_info(&d, 51, 3).is_err());
        assert!(grid_dp_full_info(&d, 101, 4).is_err());
    }
}
