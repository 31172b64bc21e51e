//! One-way packet delay processes with reproducible seeded streams.
//!
//! Delays fold every per-message noise source (propagation, timestamp
//! generation and reception) into a single random process. Negative total
//! delays are allowed by design: the Gaussian model is used exactly as the
//! estimators assume it, and clamping would bias them away from their
//! theoretical bounds. The event engine separately requires configurations
//! whose delays stay positive; the estimator benchmark has no such
//! restriction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed one-way propagation delay for the default 100 m deployment,
/// distance over the speed of light (~333.56 ns).
pub const DEFAULT_MEAN_DELAY: f64 = 100.0 / 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("delay spec: {field} {reason}")]
    InvalidSpec {
        field: &'static str,
        reason: String,
    },
}

/// Parametric one-way delay process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DelaySpec {
    /// Constant delay equal to `mean` on every draw.
    #[serde(rename = "deterministic")]
    Deterministic { mean: f64 },
    /// `mean + N(0, sigma^2)`, independent across draws.
    #[serde(rename = "gaussian")]
    GaussianIid { mean: f64, sigma: f64 },
    /// `mean + x(k)` where `x(k) = rho * x(k-1) + w(k)` with innovation
    /// variance `sigma^2 * (1 - rho^2)` and `x(0) ~ N(0, sigma^2)`, so the
    /// deviation process is stationary with standard deviation `sigma`.
    #[serde(rename = "ar1")]
    Ar1 { mean: f64, sigma: f64, rho: f64 },
}

impl DelaySpec {
    pub fn mean(&self) -> f64 {
        match *self {
            DelaySpec::Deterministic { mean } => mean,
            DelaySpec::GaussianIid { mean, .. } => mean,
            DelaySpec::Ar1 { mean, .. } => mean,
        }
    }

    /// Stationary standard deviation of the deviation process.
    pub fn sigma(&self) -> f64 {
        match *self {
            DelaySpec::Deterministic { .. } => 0.0,
            DelaySpec::GaussianIid { sigma, .. } => sigma,
            DelaySpec::Ar1 { sigma, .. } => sigma,
        }
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        let invalid = |field: &'static str, reason: String| DelayError::InvalidSpec { field, reason };
        if self.mean() < 0.0 {
            return Err(invalid("mean", format!("must be >= 0, got {}", self.mean())));
        }
        match *self {
            DelaySpec::Deterministic { .. } => {}
            DelaySpec::GaussianIid { sigma, .. } => {
                if sigma < 0.0 || sigma.is_nan() {
                    return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
                }
            }
            DelaySpec::Ar1 { sigma, rho, .. } => {
                if sigma < 0.0 || sigma.is_nan() {
                    return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
                }
                if !(0.0..1.0).contains(&rho) {
                    return Err(invalid("rho", format!("must be in [0, 1), got {rho}")));
                }
            }
        }
        Ok(())
    }
}

/// Stateful sampler for one delay stream.
///
/// Identical seed and spec produce a bit-exact identical sequence.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    spec: DelaySpec,
    rng: ChaCha12Rng,
    prev_deviation: f64,
    primed: bool,
}

impl DelaySampler {
    pub fn new(spec: DelaySpec, seed: u64) -> Result<Self, DelayError> {
        spec.validate()?;
        Ok(DelaySampler {
            spec,
            rng: ChaCha12Rng::seed_from_u64(seed),
            prev_deviation: 0.0,
            primed: false,
        })
    }

    pub fn spec(&self) -> &DelaySpec {
        &self.spec
    }

    /// Draw the next one-way delay and advance the stream.
    pub fn sample(&mut self) -> f64 {
        match self.spec {
            DelaySpec::Deterministic { mean } => mean,
            DelaySpec::GaussianIid { mean, sigma } => {
                let z: f64 = self.rng.sample(StandardNormal);
                mean + sigma * z
            }
            DelaySpec::Ar1 { mean, sigma, rho } => {
                let z: f64 = self.rng.sample(StandardNormal);
                let deviation = if self.primed {
                    rho * self.prev_deviation + sigma * (1.0 - rho * rho).sqrt() * z
                } else {
                    self.primed = true;
                    sigma * z
                };
                self.prev_deviation = deviation;
                mean + deviation
            }
        }
    }
}
