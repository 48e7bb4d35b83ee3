//! Quadrature and root finding with explicit tolerance contracts.
//!
//! Integrals against `dF` are evaluated after the substitution `u = F(y)`,
//! so every integrand handed to [`integrate`] lives on a subinterval of
//! `[0, 1]` and is bounded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_subdivisions: 1_000_000 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quadrature tolerances must be positive (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidConfig("max_subdivisions must be at least 1".into()));
        }
        Ok(())
    }

    /// Tolerances scaled by `factor`, floored at `1e-15`. Used for the inner
    /// integral of a nested quadrature so its noise stays below the outer
    /// tolerance.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: (self.abs_tol * factor).max(1e-15),
            rel_tol: (self.rel_tol * factor).max(1e-15),
            max_subdivisions: self.max_subdivisions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        Self { x_tol: 1e-12, f_tol: 1e-12, max_iter: 200 }
    }
}

impl RootConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_tol > 0.0 && self.f_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(format!(
                "root tolerances must be positive (x {}, f {}, iterations {})",
                self.x_tol, self.f_tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

// 15-point Kronrod extension of the 7-point Gauss rule.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gauss_kronrod<F>(f: &F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive integral of `f` over `[a, b]`.
///
/// Global bisection of the segment with the largest Gauss–Kronrod (7, 15)
/// error until the summed error is at most `abs_tol + rel_tol * |value|`.
pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    try_integrate(|x| Ok(f(x)), a, b, cfg)
}

/// [`integrate`] for fallible integrands, such as an inner quadrature.
pub fn try_integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    try_integrate_with_breaks(f, &[a, b], cfg)
}

/// Adaptive integral over `[points[0], points[last]]`, with the interior
/// points used as initial subdivision boundaries (kinks, jumps).
pub fn integrate_with_breaks<F>(f: F, points: &[f64], cfg: &QuadratureConfig) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    try_integrate_with_breaks(|x| Ok(f(x)), points, cfg)
}

pub fn try_integrate_with_breaks<F>(
    f: F,
    points: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    cfg.validate()?;
    if points.len() < 2 {
        return Err(Error::InvalidConfig("integration needs at least two points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig("integration limits must be finite".into()));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain { what: "integration limits (need a <= b)", value: points[0] });
    }

    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gauss_kronrod(&f, w[0], w[1])?;
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }
    }
    let mut subdivisions = 0usize;
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= cfg.abs_tol + cfg.rel_tol * value.abs() {
            return Ok(Estimate { value, error, subdivisions });
        }
        // Bisect the worst segments in a batch before re-summing.
        let budget = (heap.len() / 8).max(1);
        for _ in 0..budget {
            if subdivisions >= cfg.max_subdivisions {
                return Err(Error::QuadratureBudget { estimate: value, error_bound: error, subdivisions });
            }
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // cannot refine below machine resolution
                heap.push(worst);
                let (value, error) = heap
                    .iter()
                    .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
                return Err(Error::QuadratureBudget { estimate: value, error_bound: error, subdivisions });
            }
            let (lv, le) = gauss_kronrod(&f, worst.a, mid)?;
            let (rv, re) = gauss_kronrod(&f, mid, worst.b)?;
            heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
            heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
            subdivisions += 1;
        }
    }
}

/// Iterated integral of `f(u, v)` over `[a, b] x [c, d]`; `breaks(u)` may
/// return interior kink locations of the inner integrand in `v`.
pub fn integrate_2d<F, B>(
    f: F,
    (a, b): (f64, f64),
    (c, d): (f64, f64),
    breaks: B,
    outer: &QuadratureConfig,
    inner: &QuadratureConfig,
) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let inner_error = std::cell::Cell::new(0.0f64);
    let est = try_integrate(
        |u| {
            let mut pts = vec![c];
            let mut extra: Vec<f64> = breaks(u).into_iter().filter(|&v| v > c && v < d).collect();
            extra.sort_by(f64::total_cmp);
            pts.extend(extra);
            pts.push(d);
            let e = integrate_with_breaks(|v| f(u, v), &pts, inner)?;
            inner_error.set(inner_error.get().max(e.error));
            Ok(e.value)
        },
        a,
        b,
        outer,
    )?;
    Ok(Estimate {
        value: est.value,
        error: est.error + inner_error.get() * (b - a),
        subdivisions: est.subdivisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub x: f64,
    pub f_x: f64,
    pub iterations: usize,
    /// Final bracket `[lo, hi]` containing the root.
    pub bracket: (f64, f64),
}

/// Brent's method on a sign-changing bracket `[lo, hi]`.
pub fn find_root<F>(f: F, lo: f64, hi: f64, cfg: &RootConfig) -> Result<Root>
where
    F: Fn(f64) -> f64,
{
    try_find_root(|x| Ok(f(x)), lo, hi, cfg)
}

pub fn try_find_root<F>(f: F, lo: f64, hi: f64, cfg: &RootConfig) -> Result<Root>
where
    F: Fn(f64) -> Result<f64>,
{
    cfg.validate()?;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidConfig(format!("invalid root bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::NonFinite { at: if fa.is_nan() { a } else { b } });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, f_x: 0.0, iterations: 0, bracket: (a, a) });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, f_x: 0.0, iterations: 0, bracket: (b, b) });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=cfg.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * cfg.x_tol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= cfg.f_tol || xm.abs() <= tol1 {
            let bracket = if b < c { (b, c) } else { (c, b) };
            return Ok(Root { x: b.clamp(lo, hi), f_x: fb, iterations: iter, bracket });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when a == c
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
        if fb.is_nan() {
            return Err(Error::NonFinite { at: b });
        }
    }
    Err(Error::RootNotConverged { iterations: cfg.max_iter })
}
