//! Beta densities and method-of-moments estimation.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::error::{EngageError, Result};

/// Variances at or below this are treated as degenerate.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams { alpha: 1.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<BetaParams> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(BetaParams { alpha, beta })
        } else {
            Err(EngageError::Domain(format!("Beta parameters must be positive, got ({alpha}, {beta})")))
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// `ln B(alpha, beta)`.
    pub fn ln_norm(&self) -> f64 {
        ln_beta_fn(self.alpha, self.beta)
    }
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Natural log of the Beta(alpha, beta) density at `x`, for `x` strictly
/// inside the unit interval.
pub fn log_beta_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(EngageError::Domain(format!("Beta density evaluated at {x}, outside (0, 1)")));
    }
    let p = BetaParams::new(alpha, beta)?;
    Ok((p.alpha - 1.0) * x.ln() + (p.beta - 1.0) * (-x).ln_1p() - p.ln_norm())
}

/// Why a moment estimate could not be formed; callers fall back to
/// Beta(1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MomFailure {
    #[error("{have} samples, need at least {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("variance {variance} is degenerate for mean {mean}")]
    DegenerateVariance { mean: f64, variance: f64 },
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by n).
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }
}

impl Extend<f64> for Moments {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

/// Solves the first two Beta moments for its parameters:
/// `c = m(1-m)/v - 1`, `alpha = m c`, `beta = (1-m) c`.
pub fn beta_from_moments(mean: f64, variance: f64) -> std::result::Result<BetaParams, MomFailure> {
    let bound = mean * (1.0 - mean);
    if !(mean > 0.0 && mean < 1.0) || !(variance > MIN_VARIANCE) || variance >= bound {
        return Err(MomFailure::DegenerateVariance { mean, variance });
    }
    let c = bound / variance - 1.0;
    Ok(BetaParams { alpha: mean * c, beta: (1.0 - mean) * c })
}

/// Method-of-moments Beta fit using the sample mean and population variance.
pub fn beta_mom(samples: &[f64], min_samples: usize) -> std::result::Result<BetaParams, MomFailure> {
    if samples.len() < min_samples.max(2) {
        return Err(MomFailure::TooFewSamples { have: samples.len(), need: min_samples.max(2) });
    }
    let mut m = Moments::default();
    m.extend(samples.iter().copied());
    beta_from_moments(m.mean(), m.variance())
}
