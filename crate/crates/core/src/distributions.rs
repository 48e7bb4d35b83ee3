//! Continuous step distributions symmetric about zero.
//!
//! Every distribution is described by its upper tail `P(X > x)` for `x >= 0`
//! together with the inverse of that tail. The CDF, the folded CDF
//! `G(x) = 2F(x) - 1` and the quantile are all derived from that pair, so
//! `F(-x) + F(x) = 1` holds by construction and both tails keep full relative
//! precision.

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probability mass left out at each end when an unbounded support is
/// truncated for quadrature or grid construction.
pub const TAIL_TRUNCATION: f64 = 1e-13;

/// Largest CDF jump tolerated between two tabulated points with equal `x`.
pub const ATOM_TOLERANCE: f64 = 1e-9;

const HALF_TOLERANCE: f64 = 1e-12;

/// JSON description of a distribution, as accepted by the command-line tool
/// and configuration files.
///
/// ```json
/// {"kind":"uniform","a":1.0}
/// {"kind":"laplace","b":1.0}
/// {"kind":"powerfold","delta":0.1}
/// {"kind":"interval_union","c":1.0,"d":2.0}
/// {"kind":"tabulated","grid":[[0.0,0.5],[1.0,1.0]]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DistSpec {
    #[serde(rename = "uniform")]
    Uniform { a: f64 },
    #[serde(rename = "laplace")]
    Laplace { b: f64 },
    #[serde(rename = "powerfold")]
    PowerFold { delta: f64 },
    #[serde(rename = "interval_union")]
    IntervalUnion { c: f64, d: f64 },
    #[serde(rename = "tabulated")]
    Tabulated { grid: Vec<[f64; 2]> },
}

impl DistSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution specs always serialize")
    }

    pub fn build(&self) -> Result<SymmetricDistribution> {
        match self {
            DistSpec::Uniform { a } => SymmetricDistribution::uniform(*a),
            DistSpec::Laplace { b } => SymmetricDistribution::laplace(*b),
            DistSpec::PowerFold { delta } => SymmetricDistribution::power_fold(*delta),
            DistSpec::IntervalUnion { c, d } => SymmetricDistribution::interval_union(*c, *d),
            DistSpec::Tabulated { grid } => {
                let pairs: Vec<(f64, f64)> = grid.iter().map(|p| (p[0], p[1])).collect();
                SymmetricDistribution::tabulated(&pairs)
            }
        }
    }
}

/// Piecewise-linear CDF on `x >= 0`, mirrored to the negative half-line.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl TabulatedCdf {
    fn new(grid: &[(f64, f64)]) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        if grid.len() < 2 {
            return bad("tabulated grid needs at least two points".into());
        }
        if let Some(&(x, f)) = grid.iter().find(|(x, f)| !x.is_finite() || !f.is_finite()) {
            return bad(format!("non-finite grid point ({x}, {f})"));
        }
        let (x0, f0) = grid[0];
        if x0 != 0.0 {
            return bad(format!("tabulated grid must start at x = 0, got {x0}"));
        }
        if (f0 - 0.5).abs() > HALF_TOLERANCE {
            return bad(format!("F(0) must be 1/2 for a symmetric law, got {f0}"));
        }

        let mut xs = vec![0.0];
        let mut fs = vec![0.5];
        for window in grid.windows(2) {
            let (xa, fa) = window[0];
            let (xb, fb) = window[1];
            if xb < xa {
                return bad(format!("grid x values decrease ({xa} then {xb})"));
            }
            if fb < fa {
                return bad(format!("CDF values decrease ({fa} then {fb} at x = {xb})"));
            }
            if xb == xa {
                if fb - fa > ATOM_TOLERANCE {
                    return bad(format!("atom of mass {} at x = {xb}", fb - fa));
                }
                continue;
            }
            xs.push(xb);
            fs.push(fb);
        }
        let last = *fs.last().expect("grid is non-empty");
        if last > 1.0 + HALF_TOLERANCE {
            return bad(format!("CDF exceeds 1 ({last})"));
        }
        if (last - 1.0).abs() > HALF_TOLERANCE {
            return bad(format!("tabulated CDF must reach 1 at the last grid point, got {last}"));
        }
        if xs.len() < 2 {
            return bad("tabulated grid collapses to a single point".into());
        }
        *fs.last_mut().expect("non-empty") = 1.0;
        Ok(Self { xs, fs })
    }

    fn upper_tail(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x >= self.xs[last] {
            return 0.0;
        }
        // First index with xs[i] > x; x >= 0 = xs[0] so i >= 1.
        let i = self.xs.partition_point(|&g| g <= x);
        let (xa, xb) = (self.xs[i - 1], self.xs[i]);
        let (fa, fb) = (self.fs[i - 1], self.fs[i]);
        let w = (x - xa) / (xb - xa);
        // Interpolate the tail directly so the far tail keeps precision.
        let (ta, tb) = (1.0 - fa, 1.0 - fb);
        ta + w * (tb - ta)
    }

    /// Smallest `x >= 0` with `F(x) >= 1 - t`, for `t` in `(0, 1/2)`.
    fn inverse_tail(&self, t: f64) -> f64 {
        let target = 1.0 - t;
        let i = self.fs.partition_point(|&f| f < target);
        let i = i.clamp(1, self.fs.len() - 1);
        let (xa, xb) = (self.xs[i - 1], self.xs[i]);
        let (fa, fb) = (self.fs[i - 1], self.fs[i]);
        if fb <= fa {
            return xa;
        }
        let w = ((target - fa) / (fb - fa)).clamp(0.0, 1.0);
        xa + w * (xb - xa)
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.fs.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionKind {
    /// Uniform on `(-a, a)`.
    UniformSymmetric { halfwidth: f64 },
    /// Density `exp(-|x|/b) / (2b)`.
    Laplace { scale: f64 },
    /// Folded CDF `G(x) = x^delta` on `[0, 1]`.
    PowerFold { exponent: f64 },
    /// Uniform on `(-d, -c) ∪ (c, d)`.
    IntervalUnionUniform { inner: f64, outer: f64 },
    TabulatedCdf(TabulatedCdf),
}

/// A continuous distribution symmetric about 0. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDistribution {
    kind: DistributionKind,
}

fn positive_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{what} must be positive and finite, got {v}")))
    }
}

impl SymmetricDistribution {
    pub fn uniform(a: f64) -> Result<Self> {
        positive_finite("uniform half-width a", a)?;
        Ok(Self { kind: DistributionKind::UniformSymmetric { halfwidth: a } })
    }

    pub fn laplace(b: f64) -> Result<Self> {
        positive_finite("laplace scale b", b)?;
        Ok(Self { kind: DistributionKind::Laplace { scale: b } })
    }

    pub fn power_fold(delta: f64) -> Result<Self> {
        positive_finite("powerfold exponent delta", delta)?;
        Ok(Self { kind: DistributionKind::PowerFold { exponent: delta } })
    }

    pub fn interval_union(c: f64, d: f64) -> Result<Self> {
        positive_finite("interval_union inner edge c", c)?;
        positive_finite("interval_union outer edge d", d)?;
        if c >= d {
            return Err(Error::InvalidDistribution(format!(
                "interval_union needs 0 < c < d, got c = {c}, d = {d}"
            )));
        }
        Ok(Self { kind: DistributionKind::IntervalUnionUniform { inner: c, outer: d } })
    }

    /// Builds a distribution from `(x, F(x))` pairs on `x >= 0`.
    ///
    /// The grid must start at `(0, 1/2)`, be nondecreasing in both
    /// coordinates and end with `F = 1`. Repeated `x` values are merged when
    /// their CDF values agree to [`ATOM_TOLERANCE`]; larger jumps are atoms
    /// and are rejected.
    pub fn tabulated(grid: &[(f64, f64)]) -> Result<Self> {
        Ok(Self { kind: DistributionKind::TabulatedCdf(TabulatedCdf::new(grid)?) })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        DistSpec::from_json(text)?.build()
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn spec(&self) -> DistSpec {
        match &self.kind {
            DistributionKind::UniformSymmetric { halfwidth } => DistSpec::Uniform { a: *halfwidth },
            DistributionKind::Laplace { scale } => DistSpec::Laplace { b: *scale },
            DistributionKind::PowerFold { exponent } => DistSpec::PowerFold { delta: *exponent },
            DistributionKind::IntervalUnionUniform { inner, outer } => {
                DistSpec::IntervalUnion { c: *inner, d: *outer }
            }
            DistributionKind::TabulatedCdf(t) => {
                DistSpec::Tabulated { grid: t.grid().map(|(x, f)| [x, f]).collect() }
            }
        }
    }

    /// Short human-readable label, e.g. `uniform(a=1)`.
    pub fn label(&self) -> String {
        match &self.kind {
            DistributionKind::UniformSymmetric { halfwidth } => format!("uniform(a={halfwidth})"),
            DistributionKind::Laplace { scale } => format!("laplace(b={scale})"),
            DistributionKind::PowerFold { exponent } => format!("powerfold(delta={exponent})"),
            DistributionKind::IntervalUnionUniform { inner, outer } => {
                format!("interval_union(c={inner},d={outer})")
            }
            DistributionKind::TabulatedCdf(t) => format!("tabulated({} points)", t.xs.len()),
        }
    }

    /// `P(X > x)` for `x >= 0`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        debug_assert!(!(x < 0.0));
        match &self.kind {
            DistributionKind::UniformSymmetric { halfwidth: a } => {
                if x >= *a {
                    0.0
                } else {
                    (a - x) / (2.0 * a)
                }
            }
            DistributionKind::Laplace { scale } => 0.5 * (-x / scale).exp(),
            DistributionKind::PowerFold { exponent } => {
                if x >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 - x.powf(*exponent))
                }
            }
            DistributionKind::IntervalUnionUniform { inner: c, outer: d } => {
                if x <= *c {
                    0.5
                } else if x >= *d {
                    0.0
                } else {
                    (d - x) / (2.0 * (d - c))
                }
            }
            DistributionKind::TabulatedCdf(t) => t.upper_tail(x),
        }
    }

    /// Smallest `x >= 0` with `P(X > x) <= t`, for `t` in `(0, 1/2)`.
    fn inverse_tail(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0 && t < 0.5);
        match &self.kind {
            DistributionKind::UniformSymmetric { halfwidth: a } => a * (1.0 - 2.0 * t),
            DistributionKind::Laplace { scale } => -scale * (2.0 * t).ln(),
            DistributionKind::PowerFold { exponent } => (1.0 - 2.0 * t).powf(exponent.recip()),
            DistributionKind::IntervalUnionUniform { inner: c, outer: d } => {
                c + (d - c) * (1.0 - 2.0 * t)
            }
            DistributionKind::TabulatedCdf(tab) => tab.inverse_tail(t),
        }
    }

    /// Distribution function `F(x)`. Total: `NaN` maps to `NaN`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0 - self.upper_tail(x)
        } else if x < 0.0 {
            self.upper_tail(-x)
        } else {
            f64::NAN
        }
    }

    /// Folded CDF `G(x) = P(|X| <= x) = 2F(x) - 1` for `x >= 0`.
    pub fn folded_cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain { what: "folded_cdf argument", value: x });
        }
        Ok(1.0 - 2.0 * self.upper_tail(x))
    }

    /// Left-continuous inverse of the folded CDF, `G^{-1}(v)` for `v` in
    /// `(0, 1)`, computed through the tail so that `v` near 1 stays exact.
    pub fn folded_quantile_from_tail(&self, tail_mass: f64) -> f64 {
        // tail_mass = 1 - v = P(|X| > x)
        self.inverse_tail(0.5 * tail_mass)
    }

    /// Generalized inverse of `F` on `(0, 1)`; `quantile(1/2) = 0`.
    ///
    /// On the positive side this is `inf{x : F(x) >= u}`; the negative side is
    /// its reflection, which differs from the left-continuous inverse only on
    /// the countably many levels where `F` is flat.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain { what: "quantile level", value: u });
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        if u == 0.5 {
            0.0
        } else if u > 0.5 {
            self.inverse_tail(1.0 - u)
        } else {
            -self.inverse_tail(u)
        }
    }

    /// Draws one step by inversion of an open-interval uniform variate.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_unchecked(open_unit(rng))
    }

    /// Bounds of the support, possibly infinite.
    pub fn support_hint(&self) -> (f64, f64) {
        let hi = match &self.kind {
            DistributionKind::UniformSymmetric { halfwidth } => *halfwidth,
            DistributionKind::Laplace { .. } => f64::INFINITY,
            DistributionKind::PowerFold { .. } => 1.0,
            DistributionKind::IntervalUnionUniform { outer, .. } => *outer,
            DistributionKind::TabulatedCdf(t) => *t.xs.last().expect("non-empty"),
        };
        (-hi, hi)
    }

    /// Upper end of the support, or the `1 - TAIL_TRUNCATION` quantile when
    /// the support is unbounded.
    pub fn truncated_upper(&self) -> f64 {
        let (_, hi) = self.support_hint();
        if hi.is_finite() {
            hi
        } else {
            self.inverse_tail(TAIL_TRUNCATION)
        }
    }

    /// Upper end of the support, or the quantile `1 - tail` when unbounded.
    /// Used to lay out evaluation grids without wasting points in the far tail.
    pub fn grid_upper(&self, tail: f64) -> f64 {
        let (_, hi) = self.support_hint();
        if hi.is_finite() {
            hi
        } else {
            self.inverse_tail(tail)
        }
    }
}

/// Uniform variate on the open interval `(0, 1)` built from 52 random bits.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
