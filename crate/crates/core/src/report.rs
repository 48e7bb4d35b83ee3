//! Machine-readable reports behind the command-line tool.

use std::time::{SystemTime, UNIX_EPOCH};

use num_rational::Rational64;
use serde::Serialize;

use crate::distributions::{DistSpec, SymmetricDistribution};
use crate::fullinfo::{threshold_quantile_floor, value_bounds, FullInfo, FullInfoRule, FullInfoSolution};
use crate::numerics::{find_root, QuadratureConfig, RootConfig};
use crate::oracle::{enumerate_relrank_policies, evaluate_policy_exact, grid_dp_full_info, RankPolicyTable};
use crate::relranks::{
    class_u_membership_check, compute_pq, default_class_u_grid, relranks_value, to_f64, PqParams,
    RelativeRankRule, RuleBranch,
};
use crate::simulate::{estimate_expected_rank, SimConfig};
use crate::walk::{StopAt, StoppingPolicy, TwoStepRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[derive(Default)]
pub struct Tolerances {
    pub quadrature: QuadratureConfig,
    pub root: RootConfig,
}


/// Provenance embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub distribution: Option<DistSpec>,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    pub version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, distribution: Option<DistSpec>, tolerances: Tolerances, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            distribution,
            tolerances,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelRanksSolution {
    pub pq: PqParams,
    pub value: f64,
    pub branch: RuleBranch,
}

pub fn solve_relranks(dist: &SymmetricDistribution, tol: &Tolerances) -> Result<RelRanksSolution> {
    let pq = compute_pq(dist, &tol.quadrature)?;
    Ok(RelRanksSolution { value: pq.value(), branch: pq.branch(), pq })
}

pub fn solve_full(dist: &SymmetricDistribution, tol: &Tolerances) -> Result<FullInfoSolution> {
    FullInfo::with_config(dist, tol.quadrature, tol.root).solve()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub distribution: String,
    pub passed: bool,
    pub x1_star: Option<f64>,
    pub full_info_value: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub relranks_value: Option<f64>,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Monte Carlo paths per policy check; 0 skips them.
    pub mc_paths: u64,
    pub seed: u64,
    pub workers: usize,
    /// Atoms for the grid DP check; 0 skips it.
    pub dp_atoms: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { mc_paths: 200_000, seed: 20_240_101, workers: 0, dp_atoms: 1001 }
    }
}

/// Monte Carlo checks use this many standard errors.
pub const VERIFY_SIGMAS: f64 = 4.0;

/// Runs the invariant suites for one distribution.
pub fn verify(dist: &SymmetricDistribution, tol: &Tolerances, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();

    let (_, edge) = dist.support_hint();
    let top = dist.grid_upper(1e-9);
    let grid: Vec<f64> = (0..=1000).map(|i| -top + 2.0 * top * i as f64 / 1000.0).collect();
    let sym = grid.iter().map(|&x| (dist.cdf(x) + dist.cdf(-x) - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::new("symmetry", sym < 1e-12, format!("max |F(x) + F(-x) - 1| = {sym:.3e}")));

    let mut round = 0.0f64;
    for i in 1..1000 {
        let u = i as f64 / 1000.0;
        if let Ok(x) = dist.quantile(u) {
            round = round.max((dist.cdf(x) - u).abs());
        }
    }
    checks.push(Check::new("quantile round trip", round <= 1e-10, format!("max |F(Q(u)) - u| = {round:.3e}")));
    let _ = edge;

    let fi = FullInfo::with_config(dist, tol.quadrature, tol.root);
    let mut x1_star = None;
    let mut full_value = None;
    match fi.solve() {
        Ok(sol) => {
            x1_star = Some(sol.x1_star);
            full_value = Some(sol.value);
            let res = sol.diagnostics.threshold_residual;
            checks.push(Check::new("threshold equation", res.abs() <= 1e-9, format!("W1(x1*) - 2 = {res:.3e}")));
            let floor = threshold_quantile_floor();
            checks.push(Check::new(
                "threshold quantile",
                sol.f_at_threshold >= floor - 1e-9,
                format!("F(x1*) = {:.10} (floor {floor:.10})", sol.f_at_threshold),
            ));
            let (lo, hi) = value_bounds();
            checks.push(Check::new(
                "full-information bounds",
                sol.value >= lo - 1e-9 && sol.value <= hi + 1e-9,
                format!("V = {:.10} in [{lo:.10}, {hi:.10}]", sol.value),
            ));
            if opts.mc_paths > 0 {
                let cfg = SimConfig::new(opts.mc_paths, 3, opts.seed).with_workers(opts.workers);
                match estimate_expected_rank(dist, &sol.policy(), &cfg) {
                    Ok(r) => {
                        checks.push(Check::new(
                            "full-information Monte Carlo value",
                            r.within(sol.value, VERIFY_SIGMAS),
                            format!("{:.5} ± {:.5} vs {:.5}", r.mean_rank, r.std_error, sol.value),
                        ));
                        let (f1, se1) = r.stop_fraction(1);
                        let want = sol.f_at_threshold - 0.5;
                        checks.push(Check::new(
                            "full-information P(tau = 1)",
                            (f1 - want).abs() <= VERIFY_SIGMAS * se1.max(1e-12),
                            format!("{f1:.5} ± {se1:.5} vs F(x1*) - 1/2 = {want:.5}"),
                        ));
                    }
                    Err(e) => checks.push(Check::failed("full-information Monte Carlo value", &e)),
                }
            }
            if opts.dp_atoms > 0 {
                match grid_dp_full_info(dist, opts.dp_atoms, 3) {
                    Ok(dp) => {
                        let (lo, hi) = value_bounds();
                        checks.push(Check::new(
                            "grid DP value",
                            dp.value >= lo - 5e-3 && dp.value <= hi + 5e-3 && (dp.value - sol.value).abs() <= 5e-3,
                            format!("DP {:.6} vs quadrature {:.6} (m = {})", dp.value, sol.value, opts.dp_atoms),
                        ));
                    }
                    Err(e) => checks.push(Check::failed("grid DP value", &e)),
                }
            }
        }
        Err(e) => checks.push(Check::failed("full-information solve", &e)),
    }

    match fi.lower_bound_check(100) {
        Ok(lb) => checks.push(Check::new(
            "W1 lower estimates",
            lb.passed(),
            format!("max violation {:.3e}", lb.max_violation()),
        )),
        Err(e) => checks.push(Check::failed("W1 lower estimates", &e)),
    }

    let mut mono = Ok(true);
    let mut prev = f64::INFINITY;
    for i in 1..=100 {
        let x = top * i as f64 / 100.0;
        match fi.w1_positive(x) {
            Ok(w) => {
                if w > prev + 1e-9 {
                    mono = Ok(false);
                }
                prev = w;
            }
            Err(e) => {
                mono = Err(e);
                break;
            }
        }
    }
    match mono {
        Ok(m) => checks.push(Check::new("W1 nonincreasing on x > 0", m, "100-point grid".into())),
        Err(e) => checks.push(Check::failed("W1 nonincreasing on x > 0", &e)),
    }

    let mut p_out = None;
    let mut q_out = None;
    let mut rel_value = None;
    match compute_pq(dist, &tol.quadrature) {
        Ok(pq) => {
            p_out = Some(pq.p);
            q_out = Some(pq.q);
            rel_value = Some(pq.value());
            checks.push(Check::new(
                "p + q = 1/48",
                (pq.p + pq.q - 1.0 / 48.0).abs() <= 1e-9,
                format!("p = {:.12}, q = {:.12}, bound {:.2e}", pq.p, pq.q, pq.error_bound),
            ));
            let cu = class_u_membership_check(dist, &default_class_u_grid(dist, 100));
            if cu.member {
                checks.push(Check::new(
                    "p <= 1/96 within the class",
                    pq.p <= 1.0 / 96.0 + 1e-9,
                    format!("p = {:.12}", pq.p),
                ));
            } else {
                checks.push(Check::new(
                    "class membership",
                    true,
                    format!("{} grid violations; p <= 1/96 not required", cu.violations),
                ));
            }
            let pr = Rational64::approximate_float(pq.p).unwrap_or_else(|| Rational64::new(1, 96));
            match enumerate_relrank_policies(3, pr) {
                Ok(en) => {
                    let closed = relranks_value(to_f64(pr));
                    checks.push(Check::new(
                        "enumeration optimum",
                        (en.optimum_f64 - closed).abs() <= 1e-12,
                        format!("{} vs closed form {closed:.12}", en.optimum),
                    ));
                }
                Err(e) => checks.push(Check::failed("enumeration optimum", &e)),
            }
            if opts.mc_paths > 0 {
                let cfg = SimConfig::new(opts.mc_paths, 3, opts.seed ^ 0x5eed).with_workers(opts.workers);
                match estimate_expected_rank(dist, &pq.policy(), &cfg) {
                    Ok(r) => checks.push(Check::new(
                        "relative-ranks Monte Carlo value",
                        r.within(pq.value(), VERIFY_SIGMAS),
                        format!("{:.5} ± {:.5} vs {:.5} (rule {})", r.mean_rank, r.std_error, pq.value(), pq.branch()),
                    )),
                    Err(e) => checks.push(Check::failed("relative-ranks Monte Carlo value", &e)),
                }
            }
        }
        Err(e) => checks.push(Check::failed("p/q quadrature", &e)),
    }

    VerifyReport {
        distribution: dist.label(),
        passed: checks.iter().all(|c| c.passed),
        x1_star,
        full_info_value: full_value,
        p: p_out,
        q: q_out,
        relranks_value: rel_value,
        checks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub version: String,
    pub description: String,
    pub value: f64,
    /// Exact form when the row has one.
    pub exact: Option<String>,
}

fn row(version: &str, description: &str, value: f64, exact: Option<String>) -> Table2Row {
    Table2Row { version: version.into(), description: description.into(), value, exact }
}

/// `min over t in [1/2, 1] of 3t - 12t^2 + 8t^3`.
fn cubic_minimum(root: &RootConfig) -> Result<f64> {
    let g = |t: f64| 3.0 * t - 12.0 * t * t + 8.0 * t * t * t;
    // interior critical point of g on (1/2, 1)
    let crit = find_root(|t| 3.0 - 24.0 * t + 24.0 * t * t, 0.5, 1.0, root)?;
    Ok(g(crit.x).min(g(0.5)).min(g(1.0)))
}

/// The nine-row summary for horizon 3, every entry computed.
pub fn table2(tol: &Tolerances) -> Result<Vec<Table2Row>> {
    let laplace = SymmetricDistribution::laplace(1.0)?;
    let uniform = SymmetricDistribution::uniform(1.0)?;
    let extreme = SymmetricDistribution::interval_union(1.0, 2.0)?;

    let full_lower = 5.0 / 4.0 + 25.0 / 24.0 + cubic_minimum(&tol.root)? / 24.0;
    let full_lap = solve_full(&laplace, tol)?.value;
    let full_uni = solve_full(&uniform, tol)?.value;
    let full_max = solve_full(&extreme, tol)?.value;

    let glb = enumerate_relrank_policies(3, Rational64::from_integer(0))?.optimum;
    let rel_lap = solve_relranks(&laplace, tol)?.value;
    let rel_uni = solve_relranks(&uniform, tol)?.value;
    // the optimum is nondecreasing in p, so the largest sits at p = 1/48
    let mut rel_max = Rational64::from_integer(0);
    for k in 0..=48 {
        rel_max = rel_max.max(enumerate_relrank_policies(3, Rational64::new(k, 48 * 48))?.optimum);
    }
    let immediate = evaluate_policy_exact(&StopAt(0), 3, Rational64::new(1, 96))?;

    Ok(vec![
        row("Full Information", "Lower bound", full_lower, Some("(109-sqrt(2))/48".into())),
        row("Full Information", "Laplace Distribution", full_lap, None),
        row("Full Information", "Uniform Distribution", full_uni, Some("11/4-sqrt(2)/3".into())),
        row("Full Information", "Maximum", full_max, Some("55/24".into())),
        row("Relative Ranks", "Greatest Lower Bound", to_f64(glb), Some(glb.to_string())),
        row("Relative Ranks", "Laplace Distribution", rel_lap, Some("73/32".into())),
        row("Relative Ranks", "Uniform Distribution", rel_uni, Some("55/24".into())),
        row("Relative Ranks", "Maximum", to_f64(rel_max), Some(rel_max.to_string())),
        row("Both Versions", "Stopping Immediately", to_f64(immediate), Some(immediate.to_string())),
    ])
}

pub fn table2_csv(rows: &[Table2Row]) -> String {
    let mut out = String::from("version,description,expected_rank,exact\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.10},{}\n",
            r.version,
            r.description,
            r.value,
            r.exact.as_deref().unwrap_or("")
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub x1_star: f64,
}

/// `W_1` on `points` equally spaced values of `[lo, hi]`.
pub fn curve(dist: &SymmetricDistribution, tol: &Tolerances, lo: f64, hi: f64, points: usize) -> Result<Curve> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
        return Err(Error::InvalidConfig(format!("curve needs lo < hi and at least 2 points (got [{lo}, {hi}], {points})")));
    }
    let fi = FullInfo::with_config(dist, tol.quadrature, tol.root);
    let points = (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            fi.w1(x).map(|w1| CurvePoint { x, w1 })
        })
        .collect::<Result<Vec<_>>>()?;
    let (x1_star, _) = fi.solve_threshold()?;
    Ok(Curve { points, x1_star })
}

impl Curve {
    /// `x,w1,kind` rows; the threshold is one extra row of kind `threshold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,w1,kind\n");
        for p in &self.points {
            out.push_str(&format!("{},{},grid\n", p.x, p.w1));
        }
        out.push_str(&format!("{},2,threshold\n", self.x1_star));
        out
    }
}

/// A policy picked on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Two-step rule: stop at 1 iff `S_1 > 0`.
    Thm1,
    /// Full-information three-step rule; needs the distribution.
    Thm2,
    Thm4a,
    Thm4b,
    StopAt0,
    StopAtN,
    Table(RankPolicyTable),
}

impl PolicySpec {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.starts_with('{') {
            return Ok(PolicySpec::Table(RankPolicyTable::from_json(t)?));
        }
        match t.to_ascii_lowercase().as_str() {
            "thm1" => Ok(PolicySpec::Thm1),
            "thm2" => Ok(PolicySpec::Thm2),
            "thm4a" => Ok(PolicySpec::Thm4a),
            "thm4b" => Ok(PolicySpec::Thm4b),
            "stop_at_0" => Ok(PolicySpec::StopAt0),
            "stop_at_n" => Ok(PolicySpec::StopAtN),
            _ => Err(Error::InvalidPolicy(format!(
                "unknown policy {t:?}; expected thm1, thm2, thm4a, thm4b, stop_at_0, stop_at_n or a JSON rank table"
            ))),
        }
    }

    /// The horizon the policy is tied to, if any.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            PolicySpec::Thm1 => Some(2),
            PolicySpec::Thm2 | PolicySpec::Thm4a | PolicySpec::Thm4b => Some(3),
            PolicySpec::Table(t) => Some(t.horizon()),
            PolicySpec::StopAt0 | PolicySpec::StopAtN => None,
        }
    }

    pub fn build(&self, dist: &SymmetricDistribution, horizon: usize, tol: &Tolerances) -> Result<StoppingPolicy> {
        if let Some(h) = self.horizon() {
            if h != horizon {
                return Err(Error::InvalidPolicy(format!("this policy needs horizon {h}, got {horizon}")));
            }
        }
        Ok(match self {
            PolicySpec::Thm1 => StoppingPolicy::ranks(TwoStepRule),
            PolicySpec::Thm2 => {
                let (x1_star, _) = FullInfo::with_config(dist, tol.quadrature, tol.root).solve_threshold()?;
                StoppingPolicy::full(FullInfoRule { x1_star })
            }
            PolicySpec::Thm4a => StoppingPolicy::ranks(RelativeRankRule::new(RuleBranch::A)),
            PolicySpec::Thm4b => StoppingPolicy::ranks(RelativeRankRule::new(RuleBranch::B)),
            PolicySpec::StopAt0 => StoppingPolicy::ranks(StopAt(0)),
            PolicySpec::StopAtN => StoppingPolicy::ranks(StopAt(horizon)),
            PolicySpec::Table(t) => StoppingPolicy::ranks(t.clone()),
        })
    }
}

/// Parses `"1/192"`, `"0.0052"` or `"5.2e-3"` into an exact probability.
/// Decimals are read exactly; exponent forms go through the nearest
/// small-denominator rational.
pub fn parse_probability(text: &str) -> Result<Rational64> {
    let t = text.trim();
    let bad = || Error::InvalidNumber(format!("{t:?} is not a probability"));
    let r = if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        Rational64::new(n, d)
    } else if t.contains(['e', 'E']) {
        let x: f64 = t.parse().map_err(|_| bad())?;
        if !x.is_finite() {
            return Err(bad());
        }
        Rational64::approximate_float(x).ok_or_else(bad)?
    } else {
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
        if !digits_ok(int) || !digits_ok(frac) || frac.len() > 17 {
            return Err(bad());
        }
        let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let int_v: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int_v.checked_mul(scale).and_then(|v| v.checked_add(frac_v)).ok_or_else(bad)?;
        Rational64::new(num, scale)
    };
    if r < Rational64::from_integer(0) || r > Rational64::from_integer(1) {
        return Err(bad());
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities() {
        assert_eq!(parse_probability("1/192").unwrap(), Rational64::new(1, 192));
        assert_eq!(parse_probability("0.01").unwrap(), Rational64::new(1, 100));
        assert_eq!(parse_probability(".5").unwrap(), Rational64::new(1, 2));
        assert_eq!(parse_probability("1").unwrap(), Rational64::new(1, 1));
        assert_eq!(parse_probability("1e-2").unwrap(), Rational64::new(1, 100));
        for bad in ["", ".", "-0.1", "2", "1/0", "abc", "0.1.2", "1/-2", "nan", "1e400"] {
            assert!(parse_probability(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn policy_specs() {
        assert_eq!(PolicySpec::parse("THM4A").unwrap(), PolicySpec::Thm4a);
        assert_eq!(PolicySpec::parse("stop_at_n").unwrap().horizon(), None);
        assert!(PolicySpec::parse("thm9").is_err());
        let t = PolicySpec::parse(r#"{"horizon":3,"stop":[[1]]}"#).unwrap();
        assert_eq!(t.horizon(), Some(3));
        let d = SymmetricDistribution::uniform(1.0).unwrap();
        assert!(PolicySpec::Thm1.build(&d, 3, &Tolerances::default()).is_err());
        assert!(PolicySpec::StopAtN.build(&d, 5, &Tolerances::default()).is_ok());
    }

    #[test]
    fn cubic() {
        let m = cubic_minimum(&RootConfig::default()).unwrap();
        assert!((m + (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
    }
}
