//! Percentile bootstrap and Welch's unequal-variance t-test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{EngageError, Result};

pub const DEFAULT_N_BOOT: usize = 2000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_boot: DEFAULT_N_BOOT, level: DEFAULT_LEVEL, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot == 0 {
            return Err(EngageError::Config("at least one bootstrap replicate is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(EngageError::Config(format!("confidence level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

/// Replicate `b` draws from its own stream, so results do not depend on
/// how replicates are scheduled.
fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64 + 1);
    rng
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn percentile_interval(mut reps: Vec<f64>, level: f64) -> (f64, f64) {
    reps.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&reps, tail), quantile_sorted(&reps, 1.0 - tail))
}

/// Percentile bootstrap interval for the mean of binary outcomes. A
/// resample's success count is Binomial(n, p̂), which is drawn directly.
pub fn bootstrap_ci(samples: &[bool], cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(EngageError::InsufficientData("bootstrap of an empty sample".into()));
    }
    let n = samples.len() as u64;
    let p = samples.iter().filter(|x| **x).count() as f64 / n as f64;
    let dist = Binomial::new(n, p).map_err(|e| EngageError::Domain(e.to_string()))?;
    let reps: Vec<f64> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| dist.sample(&mut replicate_rng(cfg.seed, b)) as f64 / n as f64)
        .collect();
    Ok(percentile_interval(reps, cfg.level))
}

/// Percentile bootstrap interval for the mean of real-valued samples.
pub fn bootstrap_mean_ci(samples: &[f64], cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(EngageError::InsufficientData("bootstrap of an empty sample".into()));
    }
    let n = samples.len();
    let reps: Vec<f64> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b);
            (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    Ok(percentile_interval(reps, cfg.level))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's t statistic with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EngageError::InsufficientData(format!(
            "Welch test needs two samples of size >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(EngageError::Domain("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| EngageError::Domain(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p_two_sided: p })
}
