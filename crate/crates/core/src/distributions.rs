//! Inter-update time laws.
//!
//! Each link of a network renews according to one of these laws. Besides
//! sampling, every variant knows its exact first two moments, which is all the
//! closed-form age results need.

use std::f64::consts::{PI, TAU};

use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("invalid {kind} parameter: {reason}")]
    InvalidParameter { kind: &'static str, reason: String },
    /// The ensemble-average age of an arithmetic law does not converge.
    #[error("arithmetic law {0} has no limiting expected age; use a time average")]
    ArithmeticLimitUndefined(String),
}

/// Law of the i.i.d. gaps between consecutive updates on one link.
///
/// All support is non-negative. Parameters are validated on construction and
/// on deserialization, so a value of this type is always usable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawDistribution")]
pub enum InterUpdateDistribution {
    Exponential { rate: f64 },
    Rayleigh { scale: f64 },
    #[serde(rename = "chisquare")]
    ChiSquare { k: u32 },
    Beta { alpha: f64, beta: f64 },
    Uniform { a: f64, b: f64 },
    Constant { d: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawDistribution {
    Exponential { rate: f64 },
    Rayleigh { scale: f64 },
    #[serde(rename = "chisquare", alias = "chi_square", alias = "chi2")]
    ChiSquare { k: u32 },
    Beta { alpha: f64, beta: f64 },
    Uniform { a: f64, b: f64 },
    Constant { d: f64 },
}

impl TryFrom<RawDistribution> for InterUpdateDistribution {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        match raw {
            RawDistribution::Exponential { rate } => Self::exponential(rate),
            RawDistribution::Rayleigh { scale } => Self::rayleigh(scale),
            RawDistribution::ChiSquare { k } => Self::chi_square(k),
            RawDistribution::Beta { alpha, beta } => Self::beta(alpha, beta),
            RawDistribution::Uniform { a, b } => Self::uniform(a, b),
            RawDistribution::Constant { d } => Self::constant(d),
        }
    }
}

fn positive(kind: &'static str, name: &str, x: f64) -> Result<(), DistributionError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(DistributionError::InvalidParameter {
            kind,
            reason: format!("{name} must be finite and positive, got {x}"),
        })
    }
}

impl InterUpdateDistribution {
    pub fn exponential(rate: f64) -> Result<Self, DistributionError> {
        positive("exponential", "rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn rayleigh(scale: f64) -> Result<Self, DistributionError> {
        positive("rayleigh", "scale", scale)?;
        Ok(Self::Rayleigh { scale })
    }

    pub fn chi_square(k: u32) -> Result<Self, DistributionError> {
        if k == 0 {
            return Err(DistributionError::InvalidParameter {
                kind: "chisquare",
                reason: "k must be a positive integer".into(),
            });
        }
        Ok(Self::ChiSquare { k })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self, DistributionError> {
        positive("beta", "alpha", alpha)?;
        positive("beta", "beta", beta)?;
        Ok(Self::Beta { alpha, beta })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, DistributionError> {
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b) {
            return Err(DistributionError::InvalidParameter {
                kind: "uniform",
                reason: format!("need 0 <= a < b, got a = {a}, b = {b}"),
            });
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn constant(d: f64) -> Result<Self, DistributionError> {
        positive("constant", "d", d)?;
        Ok(Self::Constant { d })
    }

    /// Unit-mean law with variance `v`: `Uniform(1 - sqrt(3v), 1 + sqrt(3v))`,
    /// degenerating to `Constant(1)` at `v = 0`. Needs `0 <= v <= 1/3` for the
    /// support to stay non-negative.
    pub fn unit_mean_uniform(v: f64) -> Result<Self, DistributionError> {
        if !(v.is_finite() && (0.0..=1.0 / 3.0).contains(&v)) {
            return Err(DistributionError::InvalidParameter {
                kind: "uniform",
                reason: format!("variance {v} outside [0, 1/3]"),
            });
        }
        if v == 0.0 {
            return Self::constant(1.0);
        }
        let half_width = (3.0 * v).sqrt();
        // 3 * (1/3) may round to just above 1.
        Self::uniform((1.0 - half_width).max(0.0), 1.0 + half_width)
    }

    pub fn name(&self) -> String {
        match *self {
            Self::Exponential { rate } => format!("Exponential({rate})"),
            Self::Rayleigh { scale } => format!("Rayleigh({scale})"),
            Self::ChiSquare { k } => format!("ChiSquare({k})"),
            Self::Beta { alpha, beta } => format!("Beta({alpha},{beta})"),
            Self::Uniform { a, b } => format!("Uniform({a},{b})"),
            Self::Constant { d } => format!("Constant({d})"),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Rayleigh { scale } => scale * (PI / 2.0).sqrt(),
            Self::ChiSquare { k } => f64::from(k),
            Self::Beta { alpha, beta } => alpha / (alpha + beta),
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Constant { d } => d,
        }
    }

    /// `E[Y^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Rayleigh { scale } => 2.0 * scale * scale,
            Self::ChiSquare { k } => {
                let k = f64::from(k);
                k * (k + 2.0)
            }
            Self::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * (alpha + 1.0) / (s * (s + 1.0))
            }
            Self::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            Self::Constant { d } => d * d,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Rayleigh { scale } => (4.0 - PI) * scale * scale / 2.0,
            Self::ChiSquare { k } => 2.0 * f64::from(k),
            Self::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            Self::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Self::Constant { .. } => 0.0,
        }
    }

    /// Long-run average backward recurrence time `E[Y^2] / (2 E[Y])`: the
    /// share of end-user age contributed by one link carrying this law.
    ///
    /// The ratio is defined for every variant; for arithmetic laws it is the
    /// time average only. See [`Self::ensemble_age_limit`].
    pub fn age_contribution(&self) -> f64 {
        self.second_moment() / (2.0 * self.mean())
    }

    /// Limit of the expected age of a one-hop link as `t -> inf`, which only
    /// exists for non-arithmetic laws.
    pub fn ensemble_age_limit(&self) -> Result<f64, DistributionError> {
        if self.is_arithmetic() {
            Err(DistributionError::ArithmeticLimitUndefined(self.name()))
        } else {
            Ok(self.age_contribution())
        }
    }

    /// Whether the support lies on a lattice `{0, d, 2d, ...}`.
    pub fn is_arithmetic(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    /// One draw. Builds a [`Sampler`] on the fly; hot loops should keep one.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        Sampler::new(self).sample(rng)
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self)
    }
}

/// Square of a standard normal, from one Box-Muller pair.
#[inline]
fn squared_normal_pair(rng: &mut RngStream) -> (f64, f64) {
    let radius_sq = -2.0 * rng.uniform_open0().ln();
    let (s, c) = (TAU * rng.uniform()).sin_cos();
    (radius_sq * c * c, radius_sq * s * s)
}

/// Precomputed drawing state for one law.
#[derive(Debug, Clone)]
pub struct Sampler(SamplerKind);

#[derive(Debug, Clone)]
enum SamplerKind {
    Exponential { mean: f64 },
    Rayleigh { scale: f64 },
    ChiSquare { k: u32 },
    Beta(rand_distr::Beta<f64>),
    Uniform { a: f64, width: f64 },
    Constant(f64),
}

impl Sampler {
    pub fn new(dist: &InterUpdateDistribution) -> Self {
        use InterUpdateDistribution as D;
        Sampler(match *dist {
            D::Exponential { rate } => SamplerKind::Exponential { mean: 1.0 / rate },
            D::Rayleigh { scale } => SamplerKind::Rayleigh { scale },
            D::ChiSquare { k } => SamplerKind::ChiSquare { k },
            D::Beta { alpha, beta } => SamplerKind::Beta(
                rand_distr::Beta::new(alpha, beta).expect("parameters validated at construction"),
            ),
            D::Uniform { a, b } => SamplerKind::Uniform { a, width: b - a },
            D::Constant { d } => SamplerKind::Constant(d),
        })
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self.0 {
            SamplerKind::Exponential { mean } => -mean * rng.uniform_open0().ln(),
            SamplerKind::Rayleigh { scale } => scale * (-2.0 * rng.uniform_open0().ln()).sqrt(),
            SamplerKind::ChiSquare { k } => {
                let mut acc = 0.0;
                let mut left = k;
                while left >= 2 {
                    let (x, y) = squared_normal_pair(rng);
                    acc += x + y;
                    left -= 2;
                }
                if left == 1 {
                    acc += squared_normal_pair(rng).0;
                }
                acc
            }
            SamplerKind::Beta(ref beta) => beta.sample(rng),
            SamplerKind::Uniform { a, width } => a + width * rng.uniform(),
            SamplerKind::Constant(d) => d,
        }
    }
}
