//! Min-max scaling of thread lengths and inter-post delays onto the open
//! unit interval, where the Beta densities of the mixture live.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Thread};
use crate::error::{EngageError, Result};

pub const DEFAULT_DELTA_CAP_SECONDS: f64 = 30.0 * 24.0 * 3600.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub delta_cap: f64,
    pub epsilon: f64,
    pub log_transform: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            delta_cap: DEFAULT_DELTA_CAP_SECONDS,
            epsilon: DEFAULT_EPSILON,
            log_transform: false,
        }
    }
}

/// The corpus-level constants that fix the scaling map, so held-out threads
/// can be scaled exactly as the training corpus was.
///
/// `delta_min` and `delta_max` are measured after capping and, when
/// `log_deltas` is set, after the `ln(1 + x)` transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub len_min: u32,
    pub len_max: u32,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_cap: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub log_deltas: bool,
}

impl ScalingParams {
    pub fn validate(&self) -> Result<()> {
        if self.len_min >= self.len_max {
            return Err(EngageError::DegenerateRange(format!(
                "length range [{}, {}]",
                self.len_min, self.len_max
            )));
        }
        if !(self.delta_min < self.delta_max) {
            return Err(EngageError::DegenerateRange(format!(
                "delta range [{}, {}]",
                self.delta_min, self.delta_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.01) {
            return Err(EngageError::Config(format!("epsilon {} outside (0, 0.01]", self.epsilon)));
        }
        if !(self.delta_cap > 0.0) {
            return Err(EngageError::Config(format!("delta cap {} must be positive", self.delta_cap)));
        }
        Ok(())
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    /// Capped (and optionally log-transformed) delay, before min-max.
    pub fn transform_delta(&self, seconds: f64) -> f64 {
        let capped = seconds.min(self.delta_cap);
        if self.log_deltas {
            capped.ln_1p()
        } else {
            capped
        }
    }

    pub fn scale_length(&self, k: usize) -> f64 {
        let span = f64::from(self.len_max - self.len_min);
        self.clamp((k as f64 - f64::from(self.len_min)) / span)
    }

    pub fn scale_delta(&self, seconds: f64) -> f64 {
        let t = self.transform_delta(seconds);
        self.clamp((t - self.delta_min) / (self.delta_max - self.delta_min))
    }

    /// Length in posts for a scaled value (not rounded).
    pub fn unscale_length(&self, x: f64) -> f64 {
        f64::from(self.len_min) + x * f64::from(self.len_max - self.len_min)
    }

    /// Delay in seconds for a scaled value.
    pub fn unscale_delta(&self, x: f64) -> f64 {
        let t = self.delta_min + x * (self.delta_max - self.delta_min);
        if self.log_deltas {
            t.exp_m1()
        } else {
            t
        }
    }
}

/// Fits the scaling map on `corpus` and fills every thread's scaled length
/// and every reply's scaled delay.
pub fn scale_corpus(corpus: Corpus, config: &ScalingConfig) -> Result<Corpus> {
    let params = fit_scaling(&corpus, config)?;
    apply_scaling(corpus, &params)
}

/// Computes the scaling constants for `corpus` without modifying it.
pub fn fit_scaling(corpus: &Corpus, config: &ScalingConfig) -> Result<ScalingParams> {
    if corpus.is_empty() {
        return Err(EngageError::EmptyCorpus);
    }
    let (len_min, len_max) = corpus
        .threads
        .iter()
        .map(Thread::length)
        .fold((usize::MAX, 0usize), |(lo, hi), k| (lo.min(k), hi.max(k)));
    if len_min == len_max {
        return Err(EngageError::DegenerateRange(format!("all threads have length {len_min}")));
    }
    let mut probe = ScalingParams {
        len_min: len_min as u32,
        len_max: len_max as u32,
        delta_min: 0.0,
        delta_max: 0.0,
        delta_cap: config.delta_cap,
        epsilon: config.epsilon,
        log_deltas: config.log_transform,
    };
    let (dmin, dmax) = corpus
        .threads
        .iter()
        .flat_map(|t| t.replies.iter())
        .map(|r| probe.transform_delta(r.delta_seconds))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if !(dmin < dmax) {
        return Err(EngageError::DegenerateRange(
            "all inter-post delays are equal (or there are none)".into(),
        ));
    }
    probe.delta_min = dmin;
    probe.delta_max = dmax;
    probe.validate()?;
    Ok(probe)
}

/// Scales `corpus` with fixed, previously fitted constants.
pub fn apply_scaling(mut corpus: Corpus, params: &ScalingParams) -> Result<Corpus> {
    params.validate()?;
    for t in &mut corpus.threads {
        scale_thread(t, params);
    }
    corpus.scaling = Some(*params);
    Ok(corpus)
}

pub fn scale_thread(thread: &mut Thread, params: &ScalingParams) {
    thread.length_scaled = Some(params.scale_length(thread.length()));
    for r in &mut thread.replies {
        r.delta_scaled = Some(params.scale_delta(r.delta_seconds));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PostRecord;

    fn thread(id: &str, k: usize, delta: i64) -> Thread {
        let posts: Vec<PostRecord> = (0..k)
            .map(|i| {
                let user = if i % 2 == 0 { "S" } else { "A" };
                PostRecord::new(id, format!("p{i}"), user, i as i64 * delta)
            })
            .collect();
        Thread::from_merged_posts(id, &posts).unwrap()
    }

    fn cfg() -> ScalingConfig {
        ScalingConfig { epsilon: 1e-6, ..ScalingConfig::default() }
    }

    #[test]
    fn length_midpoint() {
        let threads = (1..=11).map(|k| thread(&format!("t{k}"), k, k as i64)).collect();
        let c = scale_corpus(Corpus::new(threads), &cfg()).unwrap();
        let t6 = c.threads.iter().find(|t| t.length() == 6).unwrap();
        assert!((t6.length_scaled.unwrap() - 0.5).abs() < 1e-15);
        let t1 = c.threads.iter().find(|t| t.length() == 1).unwrap();
        assert_eq!(t1.length_scaled, Some(1e-6));
    }

    #[test]
    fn length_hand_minmax() {
        let threads = vec![thread("a", 2, 5), thread("b", 4, 7), thread("c", 10, 9)];
        let c = scale_corpus(Corpus::new(threads), &cfg()).unwrap();
        assert!((c.threads[1].length_scaled.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn delta_at_minimum_clamps_to_epsilon() {
        let threads = vec![thread("a", 2, 5), thread("b", 3, 50)];
        let c = scale_corpus(Corpus::new(threads), &cfg()).unwrap();
        assert_eq!(c.threads[0].replies[0].delta_scaled, Some(1e-6));
        assert_eq!(c.threads[1].replies[0].delta_scaled, Some(1.0 - 1e-6));
        let p = c.scaling.unwrap();
        assert_eq!((p.delta_min, p.delta_max), (5.0, 50.0));
    }

    #[test]
    fn degenerate_ranges() {
        let same_len = vec![thread("a", 3, 5), thread("b", 3, 9)];
        assert!(matches!(
            scale_corpus(Corpus::new(same_len), &cfg()),
            Err(EngageError::DegenerateRange(_))
        ));
        let same_delta = vec![thread("a", 2, 5), thread("b", 3, 5)];
        assert!(matches!(
            scale_corpus(Corpus::new(same_delta), &cfg()),
            Err(EngageError::DegenerateRange(_))
        ));
    }

    #[test]
    fn cap_and_log_transform() {
        let p = ScalingParams {
            len_min: 1,
            len_max: 10,
            delta_min: 0.0,
            delta_max: 100f64.ln_1p(),
            delta_cap: 100.0,
            epsilon: 1e-6,
            log_deltas: true,
        };
        assert_eq!(p.scale_delta(1e9), 1.0 - 1e-6);
        let x = p.scale_delta(30.0);
        assert!((p.unscale_delta(x) - 30.0).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaling_is_monotone_and_bounded(a in 0.0f64..1e7, b in 0.0f64..1e7, log in any::<bool>()) {
                let p = ScalingParams {
                    len_min: 1, len_max: 40, delta_min: 0.0,
                    delta_max: if log { 1e6f64.ln_1p() } else { 1e6 },
                    delta_cap: 1e6, epsilon: 1e-6, log_deltas: log,
                };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (sl, sh) = (p.scale_delta(lo), p.scale_delta(hi));
                prop_assert!(sl <= sh);
                prop_assert!(sl >= 1e-6 && sh <= 1.0 - 1e-6);
            }
        }
    }
}
