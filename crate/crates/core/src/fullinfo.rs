//! The three-step full-information problem.
//!
//! After one step the continuation value is `W_1(X_1)`, a nonincreasing
//! function of `X_1` on `(0, inf)` that runs from `9/4` down to the two-step
//! value `15/8`. Stopping at time 1 is worth exactly 2 when `X_1 > 0`, so the
//! rule stops on `0 < X_1 <= x1*` where `W_1(x1*) = 2`.
//!
//! Every integral against `dF` is computed in `u = F(y)` space.

use serde::{Deserialize, Serialize};

use crate::distributions::{SymmetricDistribution, TAIL_TRUNCATION};
use crate::numerics::{integrate, try_find_root, try_integrate, QuadratureConfig, RootConfig};
use crate::walk::{relative_rank, Decision, FullInfoPolicy, StoppingPolicy};
use crate::{Error, Result};

/// `W_1` at the origin, the common limit of both one-sided formulas.
pub const W1_AT_ZERO: f64 = 2.25;
/// The two-step optimal value, also `lim W_1(x)` as `x -> inf`.
pub const TWO_STEP_VALUE: f64 = 1.875;
const SCAN_POINTS: usize = 200;

/// Lower and upper universal bounds on the optimal value.
pub fn value_bounds() -> (f64, f64) {
    ((109.0 - std::f64::consts::SQRT_2) / 48.0, 55.0 / 24.0)
}

/// `1/2 + sqrt(2)/4`, the smallest possible `F(x1*)`.
pub fn threshold_quantile_floor() -> f64 {
    0.5 + std::f64::consts::SQRT_2 / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Error bound of the outer value integral, including tail truncation.
    pub value_error: f64,
    /// Largest inner-quadrature error seen while evaluating `W_1`.
    pub w1_error: f64,
    /// `W_1(x1*) - 2`.
    pub threshold_residual: f64,
    /// Sign-change bracket handed to the root finder.
    pub bracket: (f64, f64),
    pub root_iterations: usize,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullInfoSolution {
    pub x1_star: f64,
    pub value: f64,
    pub f_at_threshold: f64,
    pub diagnostics: Diagnostics,
}

impl FullInfoSolution {
    /// The optimal rule for this solution.
    pub fn policy(&self) -> StoppingPolicy {
        StoppingPolicy::full(FullInfoRule { x1_star: self.x1_star })
    }
}

/// Pointwise comparison of `W_1` against its analytic lower estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub points: usize,
    /// Largest `bound - W_1` over the positive grid (negative means slack).
    pub max_violation_positive: f64,
    pub max_violation_negative: f64,
    pub tolerance: f64,
}

impl LowerBoundReport {
    pub fn max_violation(&self) -> f64 {
        self.max_violation_positive.max(self.max_violation_negative)
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= self.tolerance
    }
}

/// Solver for one distribution with fixed numerical tolerances.
#[derive(Debug, Clone)]
pub struct FullInfo<'d> {
    dist: &'d SymmetricDistribution,
    quad: QuadratureConfig,
    inner: QuadratureConfig,
    root: RootConfig,
}

impl<'d> FullInfo<'d> {
    pub fn new(dist: &'d SymmetricDistribution) -> Self {
        Self::with_config(dist, QuadratureConfig::default(), RootConfig::default())
    }

    pub fn with_config(
        dist: &'d SymmetricDistribution,
        quad: QuadratureConfig,
        root: RootConfig,
    ) -> Self {
        Self { dist, quad, inner: quad.tightened(1e-2), root }
    }

    pub fn distribution(&self) -> &SymmetricDistribution {
        self.dist
    }

    fn f(&self, x: f64) -> f64 {
        self.dist.cdf(x)
    }

    /// Value after two steps: the smaller of stopping (`R~_2 + 1/2`) and
    /// continuing (`3.5 - F(x2) - F(x1 + x2)`). Ties count as stopping.
    pub fn v2(&self, x1: f64, x2: f64) -> f64 {
        let stop = relative_rank(&[0.0, x1, x1 + x2]) as f64 + 0.5;
        stop.min(self.w2(x1, x2))
    }

    /// Continuation value after two steps.
    pub fn w2(&self, x1: f64, x2: f64) -> f64 {
        3.5 - self.f(x2) - self.f(x1 + x2)
    }

    /// `int_{u0}^{u1} F(Q(u) - x) du`, with the upper end clipped at `1 - eps`.
    fn shifted_mass(&self, x: f64, u0: f64, u1: f64) -> Result<(f64, f64)> {
        let u1 = u1.min(1.0 - TAIL_TRUNCATION);
        let u0 = u0.max(TAIL_TRUNCATION);
        if u1 <= u0 {
            return Ok((0.0, 0.0));
        }
        let est = integrate(|u| self.f(self.dist.quantile_unchecked(u) - x), u0, u1, &self.inner)?;
        Ok((est.value, est.error))
    }

    fn w1_positive_est(&self, x: f64) -> Result<(f64, f64)> {
        let (fx, fh) = (self.f(x), self.f(0.5 * x));
        let (a, ea) = self.shifted_mass(x, 0.5, fh)?;
        let (b, eb) = self.shifted_mass(x, fx, 1.0)?;
        let value = 15.0 / 8.0 + a + b + fx - fh - 0.5 * (fx * fx - fh * fh);
        Ok((value, ea + eb + TAIL_TRUNCATION))
    }

    fn w1_negative_est(&self, x: f64) -> Result<(f64, f64)> {
        let (fx, fh) = (self.f(x), self.f(0.5 * x));
        let (a, ea) = self.shifted_mass(x, fx, fh)?;
        let (b, eb) = self.shifted_mass(x, 0.5, 1.0)?;
        let value = 19.0 / 8.0 + a + b - fh + 0.5 * (fh * fh - fx * fx);
        Ok((value, ea + eb + TAIL_TRUNCATION))
    }

    /// `W_1(x)` for `x > 0`.
    pub fn w1_positive(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain { what: "w1_positive needs x > 0", value: x });
        }
        Ok(self.w1_positive_est(x)?.0)
    }

    /// `W_1(x)` for `x < 0`.
    pub fn w1_negative(&self, x: f64) -> Result<f64> {
        if !(x < 0.0) || !x.is_finite() {
            return Err(Error::Domain { what: "w1_negative needs x < 0", value: x });
        }
        Ok(self.w1_negative_est(x)?.0)
    }

    fn w1_est(&self, x: f64) -> Result<(f64, f64)> {
        if x > 0.0 {
            self.w1_positive_est(x)
        } else if x < 0.0 {
            self.w1_negative_est(x)
        } else if x == 0.0 {
            Ok((W1_AT_ZERO, 0.0))
        } else {
            Err(Error::NonFinite { at: x })
        }
    }

    /// Continuation value after one step, on the whole real line.
    pub fn w1(&self, x: f64) -> Result<f64> {
        Ok(self.w1_est(x)?.0)
    }

    /// Largest root of `W_1(x) = 2` on `x > 0`, with the bracket and
    /// iteration count that produced it.
    pub fn solve_threshold(&self) -> Result<(f64, Diagnostics)> {
        let g = |x: f64| self.w1_est(x).map(|(v, _)| v - 2.0);

        let mut lo = self.dist.quantile_unchecked(0.5 + 1e-10);
        let mut shrink = 0;
        while g(lo)? < 0.0 {
            lo *= 0.5;
            shrink += 1;
            if shrink > 64 || lo == 0.0 {
                return Err(Error::Threshold(format!("W1 < 2 arbitrarily close to 0 (x = {lo})")));
            }
        }
        let mut hi = self.dist.quantile_unchecked(1.0 - 1e-12);
        let mut grow = 0;
        while g(hi)? >= 0.0 {
            // Compact supports may keep W1 at or above 2 up to the edge.
            hi *= 2.0;
            grow += 1;
            if grow > 64 || !hi.is_finite() {
                return Err(Error::Threshold(format!("W1 >= 2 on the whole bracket (x up to {hi})")));
            }
        }

        let ratio = (hi / lo).ln() / (SCAN_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| match i {
                0 => lo,
                i if i == SCAN_POINTS - 1 => hi,
                i => lo * (ratio * i as f64).exp(),
            })
            .collect();
        let values = grid.iter().map(|&x| g(x)).collect::<Result<Vec<_>>>()?;
        let i = (0..SCAN_POINTS - 1)
            .rev()
            .find(|&i| values[i] >= 0.0 && values[i + 1] < 0.0)
            .ok_or_else(|| Error::Threshold("no sign change of W1 - 2 on the scan grid".into()))?;
        let bracket = (grid[i], grid[i + 1]);
        let root = try_find_root(g, bracket.0, bracket.1, &self.root)?;
        let (w, w_err) = self.w1_est(root.x)?;
        Ok((
            root.x,
            Diagnostics {
                value_error: 0.0,
                w1_error: w_err,
                threshold_residual: w - 2.0,
                bracket,
                root_iterations: root.iterations,
                subdivisions: 0,
            },
        ))
    }

    /// Threshold and optimal value.
    pub fn solve(&self) -> Result<FullInfoSolution> {
        let (x1_star, mut diag) = self.solve_threshold()?;
        let f_star = self.f(x1_star);
        let w1_err = std::cell::Cell::new(diag.w1_error);
        let w1_q = |u: f64| {
            let (v, e) = self.w1_est(self.dist.quantile_unchecked(u))?;
            w1_err.set(w1_err.get().max(e));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { at: u })
            }
        };
        let eps = TAIL_TRUNCATION;
        let lower = try_integrate(w1_q, eps, 0.5, &self.quad)?;
        let upper = if f_star < 1.0 - eps {
            try_integrate(w1_q, f_star, 1.0 - eps, &self.quad)?
        } else {
            crate::numerics::Estimate { value: 0.0, error: 0.0, subdivisions: 0 }
        };
        let stop_mass = 2.0 * (f_star - 0.5);
        let value = lower.value + stop_mass + upper.value;
        diag.w1_error = w1_err.get();
        diag.value_error = lower.error + upper.error + diag.w1_error + 6.0 * eps;
        diag.subdivisions = lower.subdivisions + upper.subdivisions;
        Ok(FullInfoSolution { x1_star, value, f_at_threshold: f_star, diagnostics: diag })
    }

    /// Checks `W_1(x) >= 15/8 + F(x)(1 - F(x))` for `x > 0` and
    /// `W_1(x) >= 23/8 - F(x) - F(x/2)/2 + F(x/2)^2/2` for `x < 0` on a grid of
    /// `points` quantiles on each side.
    pub fn lower_bound_check(&self, points: usize) -> Result<LowerBoundReport> {
        let mut pos = f64::NEG_INFINITY;
        let mut neg = f64::NEG_INFINITY;
        for i in 1..=points {
            let u = 0.5 + 0.5 * (i as f64 - 0.5) / points as f64;
            let x = self.dist.quantile_unchecked(u);
            if x > 0.0 {
                let fx = self.f(x);
                pos = pos.max(15.0 / 8.0 + fx * (1.0 - fx) - self.w1_positive(x)?);
                let y = -x;
                let (fy, fh) = (self.f(y), self.f(0.5 * y));
                neg = neg.max(23.0 / 8.0 - fy - 0.5 * fh + 0.5 * fh * fh - self.w1_negative(y)?);
            }
        }
        Ok(LowerBoundReport {
            points,
            max_violation_positive: pos,
            max_violation_negative: neg,
            tolerance: 1e-9,
        })
    }
}

/// The optimal three-step full-information rule for threshold `x1_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullInfoRule {
    pub x1_star: f64,
}

impl FullInfoPolicy for FullInfoRule {
    fn horizon(&self) -> Option<usize> {
        Some(3)
    }

    fn decide(&self, k: usize, steps: &[f64]) -> Decision {
        match k {
            0 => Decision::Continue,
            1 => Decision::stop_if(steps[0] > 0.0 && steps[0] <= self.x1_star),
            2 => {
                let (x1, x2) = (steps[0], steps[1]);
                let stop = if x1 > 0.0 {
                    x2 > 0.0 || (-x1 < x2 && x2 <= -0.5 * x1)
                } else {
                    (0.0 < x2 && x2 <= -0.5 * x1) || x2 > -x1
                };
                Decision::stop_if(stop)
            }
            _ => Decision::Stop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> SymmetricDistribution {
        SymmetricDistribution::uniform(1.0).unwrap()
    }

    fn laplace() -> SymmetricDistribution {
        SymmetricDistribution::laplace(1.0).unwrap()
    }

    #[test]
    fn v2_examples() {
        let d = uniform();
        let fi = FullInfo::new(&d);
        assert_eq!(fi.v2(0.3, 0.2), 1.5);
        assert!((fi.v2(0.6, -0.2) - 2.4).abs() < 1e-12);
        assert!((fi.v2(0.6, -0.4) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_w1_closed_forms() {
        let d = uniform();
        let fi = FullInfo::new(&d);
        for &x in &[0.1, 0.5, 0.9, 0.99] {
            let pos = 2.25 - x / 4.0 - x * x / 16.0;
            assert!((fi.w1_positive(x).unwrap() - pos).abs() < 1e-10, "x = {x}");
            let y = -x;
            let neg = 2.25 - 3.0 * y / 4.0 - 3.0 * y * y / 16.0;
            assert!((fi.w1_negative(y).unwrap() - neg).abs() < 1e-10, "x = {y}");
        }
        assert!((fi.w1_positive(0.5).unwrap() - 2.109375).abs() < 1e-10);
        assert!((fi.w1_negative(-0.5).unwrap() - 2.578125).abs() < 1e-10);
    }

    #[test]
    fn laplace_w1_closed_forms() {
        let d = laplace();
        let fi = FullInfo::new(&d);
        for &x in &[0.2f64, 1.0, 2.5] {
            let e = (-x).exp();
            let pos = 15.0 / 8.0 + x * e / 8.0 + e / 2.0 - e * e / 8.0;
            assert!((fi.w1_positive(x).unwrap() - pos).abs() < 1e-10);
            let y = -x;
            let neg = 23.0 / 8.0 + y * y.exp() / 8.0 - y.exp() / 2.0 - (2.0 * y).exp() / 8.0;
            assert!((fi.w1_negative(y).unwrap() - neg).abs() < 1e-10);
        }
        assert!((fi.w1_positive(1.0).unwrap() - 2.0880).abs() < 1e-4);
    }

    #[test]
    fn w1_limits() {
        for d in [uniform(), laplace()] {
            let fi = FullInfo::new(&d);
            assert!((fi.w1_positive(1e-9).unwrap() - 2.25).abs() < 1e-6);
            assert!((fi.w1_negative(-1e-9).unwrap() - 2.25).abs() < 1e-6);
            // with compact support the two-step value is reached at twice the edge
            let (_, edge) = d.support_hint();
            let far = if edge.is_finite() { 2.0 * edge } else { d.quantile(1.0 - 1e-10).unwrap() };
            assert!((fi.w1_positive(far).unwrap() - 1.875).abs() < 1e-6);
            assert_eq!(fi.w1(0.0).unwrap(), 2.25);
        }
    }

    #[test]
    fn domain_errors() {
        let d = uniform();
        let fi = FullInfo::new(&d);
        assert!(fi.w1_positive(0.0).is_err());
        assert!(fi.w1_positive(-1.0).is_err());
        assert!(fi.w1_negative(0.0).is_err());
        assert!(fi.w1_negative(0.5).is_err());
        assert!(fi.w1(f64::NAN).is_err());
    }

    #[test]
    fn uniform_solution() {
        let d = uniform();
        let sol = FullInfo::new(&d).solve().unwrap();
        assert!((sol.x1_star - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-9);
        assert!((sol.value - (11.0 / 4.0 - 2f64.sqrt() / 3.0)).abs() < 1e-8);
        assert!(sol.diagnostics.threshold_residual.abs() <= 1e-9);
        assert!(sol.f_at_threshold >= threshold_quantile_floor());
    }

    #[test]
    fn policy_examples() {
        let rule = FullInfoRule { x1_star: 2.0 * (2f64.sqrt() - 1.0) };
        assert_eq!(rule.decide(0, &[]), Decision::Continue);
        assert_eq!(rule.decide(1, &[0.5]), Decision::Stop);
        assert_eq!(rule.decide(1, &[0.9]), Decision::Continue);
        assert_eq!(rule.decide(1, &[-0.1]), Decision::Continue);
        assert_eq!(rule.decide(2, &[0.9, -0.5]), Decision::Stop);
        assert_eq!(rule.decide(2, &[0.9, -0.3]), Decision::Continue);
        assert_eq!(rule.decide(2, &[0.9, -0.95]), Decision::Continue);
        assert_eq!(rule.decide(2, &[-0.3, -0.1]), Decision::Continue);
        assert_eq!(rule.decide(2, &[-0.3, 0.1]), Decision::Stop);
        assert_eq!(rule.decide(2, &[-0.3, 0.2]), Decision::Continue);
        assert_eq!(rule.decide(2, &[-0.3, 0.4]), Decision::Stop);
        assert_eq!(rule.decide(3, &[-0.3, -0.1, 0.2]), Decision::Stop);
    }

    #[test]
    fn rule_agrees_with_v2_at_time_two() {
        let d = uniform();
        let fi = FullInfo::new(&d);
        let rule = FullInfoRule { x1_star: 0.0 };
        for i in 0..40 {
            for j in 0..40 {
                let x1 = -0.975 + 0.05 * i as f64;
                let x2 = -0.9871 + 0.05 * j as f64;
                let stop_value = relative_rank(&[0.0, x1, x1 + x2]) as f64 + 0.5;
                let by_value = stop_value <= fi.w2(x1, x2);
                assert_eq!(rule.decide(2, &[x1, x2]) == Decision::Stop, by_value, "{x1} {x2}");
            }
        }
    }
}
