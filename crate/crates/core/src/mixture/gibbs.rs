//! Collapsed Gibbs sampling over thread-to-cluster assignments, with
//! method-of-moments refresh of the Beta shapes after every sweep.

use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beta::{beta_from_moments, BetaParams, Moments};
use super::{
    log_score, ClusterParams, EngagementModel, FitConfig, Priors, RoleCounts, ScoreCounts, Shapes, ThreadStats,
};
use crate::corpus::{Corpus, UserRole};
use crate::error::{EngageError, Result};
use crate::format::{Provenance, TABLE_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub sweep: usize,
    pub n_changed: usize,
    pub frac_changed: f64,
    /// Complete-data log-likelihood after the sweep and parameter refresh.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Complete-data log-likelihood after the random initialization.
    pub initial_log_likelihood: f64,
    pub sweeps: Vec<SweepStats>,
    pub stopped_early: bool,
}

impl FitTrace {
    pub fn final_log_likelihood(&self) -> f64 {
        self.sweeps.last().map_or(self.initial_log_likelihood, |s| s.log_likelihood)
    }
}

/// `sweep,n_changed,frac_changed,log_likelihood`; sweep 0 is the initial
/// assignment.
pub fn write_trace_csv<W: Write>(trace: &FitTrace, mut writer: W, provenance: &Provenance) -> Result<()> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sweep", "n_changed", "frac_changed", "log_likelihood"])?;
    w.write_record(["0", "", "", &trace.initial_log_likelihood.to_string()])?;
    for s in &trace.sweeps {
        w.write_record([
            s.sweep.to_string(),
            s.n_changed.to_string(),
            s.frac_changed.to_string(),
            s.log_likelihood.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Sampler {
    ids: Vec<String>,
    stats: Vec<ThreadStats>,
    /// Scaled delays of all fitted threads, concatenated.
    deltas: Vec<f64>,
    delta_start: Vec<usize>,
    z: Vec<usize>,
    n_e: Vec<u64>,
    roles: Vec<[u64; UserRole::COUNT]>,
    params: Vec<(BetaParams, BetaParams)>,
    shapes: Vec<Shapes>,
    priors: Priors,
    min_mom: usize,
}

impl Sampler {
    fn new(corpus: &Corpus, config: &FitConfig) -> Result<Sampler> {
        let mut ids = Vec::new();
        let mut stats = Vec::new();
        let mut deltas = Vec::new();
        let mut delta_start = Vec::new();
        for t in corpus.non_isolated() {
            stats.push(ThreadStats::from_thread(t)?);
            ids.push(t.thread_id.clone());
            delta_start.push(deltas.len());
            deltas.extend(t.replies.iter().map(|r| r.delta_scaled.unwrap_or(f64::NAN)));
        }
        delta_start.push(deltas.len());
        let k = config.k;
        Ok(Sampler {
            z: vec![0; ids.len()],
            ids,
            stats,
            deltas,
            delta_start,
            n_e: vec![0; k],
            roles: vec![[0; UserRole::COUNT]; k],
            params: vec![(BetaParams::UNIFORM, BetaParams::UNIFORM); k],
            shapes: vec![Shapes::new(BetaParams::UNIFORM, BetaParams::UNIFORM); k],
            priors: Priors { alpha_e: config.alpha_e(), alpha_r: config.alpha_r(), k },
            min_mom: config.min_cluster_for_mom,
        })
    }

    fn n(&self) -> usize {
        self.ids.len()
    }

    fn add(&mut self, i: usize, e: usize) {
        self.z[i] = e;
        self.n_e[e] += 1;
        for (c, r) in self.roles[e].iter_mut().zip(self.stats[i].roles) {
            *c += u64::from(r);
        }
    }

    fn remove(&mut self, i: usize) {
        let e = self.z[i];
        self.n_e[e] -= 1;
        for (c, r) in self.roles[e].iter_mut().zip(self.stats[i].roles) {
            *c -= u64::from(r);
        }
    }

    fn refresh_shapes(&mut self) {
        let k = self.priors.k;
        let mut len_m = vec![Moments::default(); k];
        let mut delta_m = vec![Moments::default(); k];
        for i in 0..self.n() {
            let e = self.z[i];
            len_m[e].push(self.stats[i].len_scaled);
            delta_m[e].extend(self.deltas[self.delta_start[i]..self.delta_start[i + 1]].iter().copied());
        }
        for e in 0..k {
            let fit = |m: &Moments| beta_from_moments(m.mean(), m.variance()).unwrap_or(BetaParams::UNIFORM);
            self.params[e] = if (self.n_e[e] as usize) < self.min_mom {
                (BetaParams::UNIFORM, BetaParams::UNIFORM)
            } else {
                (fit(&len_m[e]), fit(&delta_m[e]))
            };
            self.shapes[e] = Shapes::new(self.params[e].0, self.params[e].1);
        }
    }

    fn counts(&self, e: usize, total: u64) -> ScoreCounts {
        ScoreCounts { n_e: self.n_e[e], roles: self.roles[e], total }
    }

    fn complete_log_likelihood(&self) -> f64 {
        let total = self.n() as u64;
        (0..self.n())
            .map(|i| {
                let e = self.z[i];
                log_score(&self.stats[i], &self.counts(e, total), &self.shapes[e], &self.priors)
            })
            .sum()
    }

    /// One pass over all threads in corpus order; returns how many moved.
    fn sweep(&mut self, rng: &mut ChaCha8Rng, weights: &mut [f64]) -> usize {
        let k = self.priors.k;
        let total = self.n() as u64 - 1;
        let mut changed = 0;
        for i in 0..self.n() {
            let old = self.z[i];
            self.remove(i);
            let mut max = f64::NEG_INFINITY;
            for (e, w) in weights.iter_mut().enumerate().take(k) {
                *w = log_score(&self.stats[i], &self.counts(e, total), &self.shapes[e], &self.priors);
                max = max.max(*w);
            }
            let mut sum = 0.0;
            for w in weights.iter_mut() {
                *w = (*w - max).exp();
                sum += *w;
            }
            let mut u = rng.random::<f64>() * sum;
            let mut new = k - 1;
            for (e, w) in weights.iter().enumerate() {
                if u < *w {
                    new = e;
                    break;
                }
                u -= w;
            }
            if new != old {
                changed += 1;
            }
            self.add(i, new);
        }
        changed
    }

    fn into_model(self, corpus: &Corpus, config: &FitConfig, sweeps_run: usize) -> Result<EngagementModel> {
        let scaling = corpus.scaling.ok_or_else(|| EngageError::State("corpus is not scaled".into()))?;
        let clusters = (0..config.k)
            .map(|e| ClusterParams {
                n_threads: self.n_e[e],
                role_counts: RoleCounts::from_array(self.roles[e]),
                length: self.params[e].0,
                delta: self.params[e].1,
            })
            .collect();
        let assignments: BTreeMap<String, usize> = self.ids.into_iter().zip(self.z).collect();
        let model = EngagementModel {
            k: config.k,
            clusters,
            alpha_e: self.priors.alpha_e,
            alpha_r: self.priors.alpha_r,
            n_threads_fit: self.stats.len() as u64,
            scaling,
            seed: config.seed,
            sweeps_run,
            assignments,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Fits the mixture to the corpus's non-isolated threads.
pub fn gibbs_fit(corpus: &Corpus, config: &FitConfig) -> Result<EngagementModel> {
    gibbs_fit_with_trace(corpus, config).map(|(m, _)| m)
}

pub fn gibbs_fit_with_trace(corpus: &Corpus, config: &FitConfig) -> Result<(EngagementModel, FitTrace)> {
    config.validate()?;
    if corpus.scaling.is_none() {
        return Err(EngageError::State("corpus must be scaled before fitting".into()));
    }
    let mut s = Sampler::new(corpus, config)?;
    if s.n() < config.k {
        return Err(EngageError::Config(format!(
            "K = {} exceeds the {} non-isolated threads available",
            config.k,
            s.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for i in 0..s.n() {
        let e = rng.random_range(0..config.k);
        s.add(i, e);
    }
    s.refresh_shapes();
    let initial = s.complete_log_likelihood();
    info!("fitting K={} on {} threads; initial log-likelihood {initial:.3}", config.k, s.n());

    let mut trace = FitTrace { initial_log_likelihood: initial, sweeps: Vec::new(), stopped_early: false };
    let mut weights = vec![0.0; config.k];
    for sweep in 1..=config.n_sweeps {
        let changed = s.sweep(&mut rng, &mut weights);
        s.refresh_shapes();
        let frac = changed as f64 / s.n() as f64;
        let ll = s.complete_log_likelihood();
        debug!("sweep {sweep}: {changed} moved ({:.3}%), log-likelihood {ll:.3}", 100.0 * frac);
        trace.sweeps.push(SweepStats { sweep, n_changed: changed, frac_changed: frac, log_likelihood: ll });
        if frac < config.early_stop_frac {
            trace.stopped_early = true;
            break;
        }
    }
    let sweeps_run = trace.sweeps.len();
    Ok((s.into_model(corpus, config, sweeps_run)?, trace))
}
