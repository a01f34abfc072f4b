//! The engagement mixture model.
//!
//! Each cluster owns a categorical distribution over reply roles (with a
//! symmetric Dirichlet prior, collapsed into counts), a Beta distribution
//! over scaled thread length and a Beta distribution over scaled
//! inter-post delay. A thread of length `k` with replies
//! `(role_j, delta_j)` scores against cluster `e` as
//!
//! ```text
//! ln (n_e + a_E) / (|T| + K a_E)
//!   + ln Beta(len_scaled; a_len_e, b_len_e)
//!   + sum_j [ ln (n_e^(role_j) + a_R) / (n_e^(.) + 4 a_R)
//!           + ln Beta(delta_j; a_delta_e, b_delta_e) ]
//! ```
//!
//! Isolated threads (no replies) are never scored.

pub mod beta;
mod gibbs;
mod select;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Thread, UserRole};
use crate::error::{EngageError, Result};
use crate::format::{check_format, Provenance, MODEL_FORMAT, TABLE_FORMAT};
use crate::scaling::ScalingParams;

pub use beta::{beta_from_moments, beta_mom, log_beta_pdf, BetaParams, MomFailure, Moments};
pub use gibbs::{gibbs_fit, gibbs_fit_with_trace, write_trace_csv, FitTrace, SweepStats};
pub use select::{elbow_select, sweep_k, sweep_seed, write_curve_csv};

/// Per-role reply counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub first_peer_supporter: u64,
    pub new_peer_supporter: u64,
    pub existing_peer_supporter: u64,
    pub seeker: u64,
}

impl RoleCounts {
    pub fn from_array(a: [u64; UserRole::COUNT]) -> RoleCounts {
        RoleCounts {
            first_peer_supporter: a[0],
            new_peer_supporter: a[1],
            existing_peer_supporter: a[2],
            seeker: a[3],
        }
    }

    pub fn to_array(self) -> [u64; UserRole::COUNT] {
        [self.first_peer_supporter, self.new_peer_supporter, self.existing_peer_supporter, self.seeker]
    }

    pub fn get(&self, role: UserRole) -> u64 {
        self.to_array()[role.index()]
    }

    pub fn total(&self) -> u64 {
        self.to_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Threads currently assigned to the cluster.
    pub n_threads: u64,
    pub role_counts: RoleCounts,
    pub length: BetaParams,
    pub delta: BetaParams,
}

impl ClusterParams {
    pub fn empty() -> ClusterParams {
        ClusterParams {
            n_threads: 0,
            role_counts: RoleCounts::default(),
            length: BetaParams::UNIFORM,
            delta: BetaParams::UNIFORM,
        }
    }

    /// Posterior-mean role distribution under the symmetric prior.
    pub fn role_distribution(&self, alpha_r: f64) -> [f64; UserRole::COUNT] {
        let c = self.role_counts.to_array();
        let denom = self.role_counts.total() as f64 + UserRole::COUNT as f64 * alpha_r;
        let mut out = [0.0; UserRole::COUNT];
        for (o, n) in out.iter_mut().zip(c) {
            *o = (n as f64 + alpha_r) / denom;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub n_sweeps: usize,
    /// Stop once fewer than this fraction of threads change cluster in a sweep.
    pub early_stop_frac: f64,
    pub seed: u64,
    /// Clusters with fewer threads than this get Beta(1, 1) shapes.
    pub min_cluster_for_mom: usize,
    /// Dirichlet prior over clusters; `None` means `50 / K`.
    pub alpha_e: Option<f64>,
    /// Dirichlet prior over roles; `None` means `50 / 4`.
    pub alpha_r: Option<f64>,
}

impl FitConfig {
    pub fn new(k: usize, seed: u64) -> FitConfig {
        FitConfig { k, seed, ..FitConfig::default() }
    }

    pub fn alpha_e(&self) -> f64 {
        self.alpha_e.unwrap_or(50.0 / self.k as f64)
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r.unwrap_or(50.0 / UserRole::COUNT as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(EngageError::Config("K must be at least 1".into()));
        }
        if self.n_sweeps == 0 {
            return Err(EngageError::Config("at least one sweep is required".into()));
        }
        if !(0.0..1.0).contains(&self.early_stop_frac) {
            return Err(EngageError::Config(format!("early_stop_frac {} outside [0, 1)", self.early_stop_frac)));
        }
        if !(self.alpha_e() > 0.0 && self.alpha_r() > 0.0) {
            return Err(EngageError::Config("Dirichlet priors must be positive".into()));
        }
        Ok(())
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 20,
            n_sweeps: 50,
            early_stop_frac: 0.005,
            seed: 0,
            min_cluster_for_mom: 5,
            alpha_e: None,
            alpha_r: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementModel {
    pub k: usize,
    pub clusters: Vec<ClusterParams>,
    pub alpha_e: f64,
    pub alpha_r: f64,
    /// Number of (non-isolated) threads the model was fitted on.
    pub n_threads_fit: u64,
    pub scaling: ScalingParams,
    pub seed: u64,
    pub sweeps_run: usize,
    /// Hard cluster of every fitted thread.
    pub assignments: BTreeMap<String, usize>,
}

impl EngagementModel {
    /// Checks count conservation and parameter positivity.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.clusters.len() != self.k {
            return Err(EngageError::Integrity(format!("{} clusters for K = {}", self.clusters.len(), self.k)));
        }
        let n: u64 = self.clusters.iter().map(|c| c.n_threads).sum();
        if n != self.n_threads_fit || self.assignments.len() as u64 != n {
            return Err(EngageError::Integrity(format!(
                "cluster sizes sum to {n}, fitted {} threads, {} assignments",
                self.n_threads_fit,
                self.assignments.len()
            )));
        }
        if let Some((id, &e)) = self.assignments.iter().find(|(_, &e)| e >= self.k) {
            return Err(EngageError::Integrity(format!("thread {id} assigned to cluster {e}")));
        }
        for c in &self.clusters {
            BetaParams::new(c.length.alpha, c.length.beta)?;
            BetaParams::new(c.delta.alpha, c.delta.beta)?;
        }
        Ok(())
    }

    /// Threads per cluster, in cluster order.
    pub fn cluster_sizes(&self) -> Vec<u64> {
        self.clusters.iter().map(|c| c.n_threads).collect()
    }
}

/// A thread reduced to the sufficient statistics the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ThreadStats {
    pub len_scaled: f64,
    pub ln_len: f64,
    pub ln_len_c: f64,
    pub n_replies: u32,
    pub roles: [u32; UserRole::COUNT],
    pub sum_ln_d: f64,
    pub sum_ln_d_c: f64,
}

impl ThreadStats {
    pub fn from_thread(t: &Thread) -> Result<ThreadStats> {
        if t.is_isolated() {
            return Err(EngageError::State(format!("thread {} is isolated and cannot be scored", t.thread_id)));
        }
        let len = t
            .length_scaled
            .ok_or_else(|| EngageError::State(format!("thread {} is not scaled", t.thread_id)))?;
        let mut s = ThreadStats {
            len_scaled: len,
            ln_len: len.ln(),
            ln_len_c: (-len).ln_1p(),
            n_replies: t.replies.len() as u32,
            roles: [0; UserRole::COUNT],
            sum_ln_d: 0.0,
            sum_ln_d_c: 0.0,
        };
        for r in &t.replies {
            let d = r
                .delta_scaled
                .ok_or_else(|| EngageError::State(format!("thread {} is not scaled", t.thread_id)))?;
            s.roles[r.role.index()] += 1;
            s.sum_ln_d += d.ln();
            s.sum_ln_d_c += (-d).ln_1p();
        }
        if !(len > 0.0 && len < 1.0) {
            return Err(EngageError::Domain(format!("scaled length {len} of {} outside (0, 1)", t.thread_id)));
        }
        if !(s.sum_ln_d.is_finite() && s.sum_ln_d_c.is_finite()) {
            return Err(EngageError::Domain(format!("scaled delay of {} outside (0, 1)", t.thread_id)));
        }
        Ok(s)
    }
}

/// Beta shapes with their cached log normalizers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Shapes {
    len: BetaParams,
    len_norm: f64,
    delta: BetaParams,
    delta_norm: f64,
}

impl Shapes {
    pub fn new(len: BetaParams, delta: BetaParams) -> Shapes {
        Shapes { len, len_norm: len.ln_norm(), delta, delta_norm: delta.ln_norm() }
    }

    pub fn of(c: &ClusterParams) -> Shapes {
        Shapes::new(c.length, c.delta)
    }
}

/// Counts entering one score evaluation, already adjusted for exclusion.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScoreCounts {
    pub n_e: u64,
    pub roles: [u64; UserRole::COUNT],
    /// `|T|` in the mixture term (minus one when collapsed).
    pub total: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Priors {
    pub alpha_e: f64,
    pub alpha_r: f64,
    pub k: usize,
}

pub(crate) fn log_score(s: &ThreadStats, counts: &ScoreCounts, shapes: &Shapes, p: &Priors) -> f64 {
    let mix = (counts.n_e as f64 + p.alpha_e).ln() - (counts.total as f64 + p.k as f64 * p.alpha_e).ln();
    let len = (shapes.len.alpha - 1.0) * s.ln_len + (shapes.len.beta - 1.0) * s.ln_len_c - shapes.len_norm;
    let n_roles: u64 = counts.roles.iter().sum();
    let denom = (n_roles as f64 + UserRole::COUNT as f64 * p.alpha_r).ln();
    let mut roles = 0.0;
    for (c, n) in s.roles.iter().zip(counts.roles) {
        if *c > 0 {
            roles += f64::from(*c) * ((n as f64 + p.alpha_r).ln() - denom);
        }
    }
    let delta = (shapes.delta.alpha - 1.0) * s.sum_ln_d + (shapes.delta.beta - 1.0) * s.sum_ln_d_c
        - f64::from(s.n_replies) * shapes.delta_norm;
    mix + len + roles + delta
}

/// Normalizes log weights in place into probabilities; returns the log
/// normalizer.
pub(crate) fn normalize_log_weights(w: &mut [f64]) -> f64 {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in w.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

fn subtract(counts: [u64; UserRole::COUNT], exclude: &[u32; UserRole::COUNT]) -> Result<[u64; UserRole::COUNT]> {
    let mut out = counts;
    for (o, x) in out.iter_mut().zip(exclude) {
        *o = o
            .checked_sub(u64::from(*x))
            .ok_or_else(|| EngageError::Integrity("role count would become negative".into()))?;
    }
    Ok(out)
}

/// Probability of `role` under the cluster's collapsed role distribution:
/// `(n_e^(r) + a_R) / (n_e^(.) + 4 a_R)`, optionally with one thread's role
/// counts removed first.
pub fn role_prob(
    cluster: &ClusterParams,
    role: UserRole,
    alpha_r: f64,
    exclude: Option<&[u32; UserRole::COUNT]>,
) -> Result<f64> {
    let counts = match exclude {
        Some(x) => subtract(cluster.role_counts.to_array(), x)?,
        None => cluster.role_counts.to_array(),
    };
    let total: u64 = counts.iter().sum();
    Ok((counts[role.index()] as f64 + alpha_r) / (total as f64 + UserRole::COUNT as f64 * alpha_r))
}

fn check_cluster(model: &EngagementModel, cluster: usize) -> Result<()> {
    if cluster >= model.k {
        return Err(EngageError::Config(format!("cluster {cluster} out of range for K = {}", model.k)));
    }
    Ok(())
}

/// Log-likelihood of `thread` under cluster `cluster`. When `collapsed`,
/// the thread's own contribution (if the model has it assigned) is removed
/// from the cluster size, the role counts and `|T|`.
pub fn thread_log_likelihood(
    thread: &Thread,
    cluster: usize,
    model: &EngagementModel,
    collapsed: bool,
) -> Result<f64> {
    check_cluster(model, cluster)?;
    let stats = ThreadStats::from_thread(thread)?;
    let c = &model.clusters[cluster];
    let mut counts = ScoreCounts { n_e: c.n_threads, roles: c.role_counts.to_array(), total: model.n_threads_fit };
    if collapsed {
        if let Some(&own) = model.assignments.get(&thread.thread_id) {
            counts.total = counts.total.saturating_sub(1);
            if own == cluster {
                counts.n_e = counts
                    .n_e
                    .checked_sub(1)
                    .ok_or_else(|| EngageError::Integrity(format!("cluster {cluster} is empty")))?;
                counts.roles = subtract(counts.roles, &stats.roles)?;
            }
        }
    }
    Ok(log_score(&stats, &counts, &Shapes::of(c), &priors(model)))
}

fn priors(model: &EngagementModel) -> Priors {
    Priors { alpha_e: model.alpha_e, alpha_r: model.alpha_r, k: model.k }
}

/// Non-collapsed log scores of one thread against every cluster.
pub fn cluster_log_scores(thread: &Thread, model: &EngagementModel) -> Result<Vec<f64>> {
    let stats = ThreadStats::from_thread(thread)?;
    let p = priors(model);
    Ok(model
        .clusters
        .iter()
        .map(|c| {
            let counts = ScoreCounts { n_e: c.n_threads, roles: c.role_counts.to_array(), total: model.n_threads_fit };
            log_score(&stats, &counts, &Shapes::of(c), &p)
        })
        .collect())
}

/// Sum of non-collapsed thread log-likelihoods over the corpus's non-isolated
/// threads, each under its assigned cluster. Threads the model has not seen
/// are scored under their most probable cluster.
pub fn corpus_log_likelihood(model: &EngagementModel, corpus: &Corpus) -> Result<f64> {
    let p = priors(model);
    let shapes: Vec<Shapes> = model.clusters.iter().map(Shapes::of).collect();
    let counts: Vec<ScoreCounts> = model
        .clusters
        .iter()
        .map(|c| ScoreCounts { n_e: c.n_threads, roles: c.role_counts.to_array(), total: model.n_threads_fit })
        .collect();
    let mut total = 0.0;
    for t in corpus.non_isolated() {
        let stats = ThreadStats::from_thread(t)?;
        total += match model.assignments.get(&t.thread_id) {
            Some(&e) => {
                check_cluster(model, e)?;
                log_score(&stats, &counts[e], &shapes[e], &p)
            }
            None => (0..model.k)
                .map(|e| log_score(&stats, &counts[e], &shapes[e], &p))
                .fold(f64::NEG_INFINITY, f64::max),
        };
    }
    Ok(total)
}

/// Posterior cluster membership of one thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Most probable cluster; `None` is the reserved label for isolated
    /// threads, which the model never scores.
    pub cluster: Option<usize>,
    pub posterior: Vec<f64>,
}

impl Assignment {
    pub fn is_isolated(&self) -> bool {
        self.cluster.is_none()
    }
}

/// Scores every thread of `corpus` against the fitted clusters. The corpus
/// must have been scaled with the model's own scaling constants.
pub fn assign(model: &EngagementModel, corpus: &Corpus) -> Result<BTreeMap<String, Assignment>> {
    match corpus.scaling {
        Some(s) if s == model.scaling => {}
        Some(_) => return Err(EngageError::State("corpus was scaled with different constants than the model".into())),
        None => return Err(EngageError::State("corpus is not scaled".into())),
    }
    let rows: Vec<(String, Assignment)> = corpus
        .threads
        .par_iter()
        .map(|t| {
            if t.is_isolated() {
                return Ok((t.thread_id.clone(), Assignment { cluster: None, posterior: Vec::new() }));
            }
            let mut w = cluster_log_scores(t, model)?;
            normalize_log_weights(&mut w);
            let best = argmax(&w);
            Ok((t.thread_id.clone(), Assignment { cluster: Some(best), posterior: w }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().collect())
}

/// Index of the largest value; the first wins ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Round-trippable and short: tiny probabilities go to exponent form.
fn short_float(x: f64) -> String {
    if x == 0.0 || x.abs() >= 1e-4 {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// `thread_id,cluster,posterior` with the posterior as `;`-joined
/// probabilities; isolated threads have an empty cluster and posterior.
pub fn write_assignments_csv<W: Write>(
    rows: &BTreeMap<String, Assignment>,
    mut writer: W,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["thread_id", "cluster", "posterior"])?;
    for (id, a) in rows {
        let post: Vec<String> = a.posterior.iter().map(|p| short_float(*p)).collect();
        w.write_record([id.clone(), a.cluster.map(|e| e.to_string()).unwrap_or_default(), post.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    provenance: Provenance,
    model: EngagementModel,
}

pub fn model_to_json(model: &EngagementModel, provenance: &Provenance) -> Result<String> {
    let doc = ModelDocument { format: MODEL_FORMAT.to_string(), provenance: provenance.clone(), model: model.clone() };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(s: &str) -> Result<(EngagementModel, Provenance)> {
    let v: serde_json::Value = serde_json::from_str(s)?;
    let found = v.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>");
    check_format(MODEL_FORMAT, found)?;
    let doc: ModelDocument = serde_json::from_str(s)?;
    doc.model.validate()?;
    Ok((doc.model, doc.provenance))
}

pub fn write_model(model: &EngagementModel, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(model_to_json(model, provenance)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(EngagementModel, Provenance)> {
    let mut s = String::new();
    BufReader::new(File::open(path.as_ref())?).read_to_string(&mut s)?;
    model_from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cluster(roles: [u64; 4], n: u64) -> ClusterParams {
        ClusterParams { n_threads: n, role_counts: RoleCounts::from_array(roles), ..ClusterParams::empty() }
    }

    #[test]
    fn role_prob_examples() {
        // 3 seeker replies out of 10, alpha_R = 0.5: 3.5 / 12
        let c = cluster([2, 3, 2, 3], 4);
        assert_abs_diff_eq!(role_prob(&c, UserRole::Seeker, 0.5, None).unwrap(), 3.5 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(3.5 / 12.0, 0.29167, epsilon = 1e-5);

        let empty = ClusterParams::empty();
        for r in UserRole::ALL {
            assert_abs_diff_eq!(role_prob(&empty, r, 12.5, None).unwrap(), 0.25, epsilon = 1e-15);
        }

        let all_seeker = cluster([0, 0, 0, 1000], 100);
        assert!(role_prob(&all_seeker, UserRole::Seeker, 1e-9, None).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn role_prob_exclusion() {
        let c = cluster([1, 0, 0, 3], 1);
        let p = role_prob(&c, UserRole::Seeker, 1.0, Some(&[1, 0, 0, 1])).unwrap();
        assert_abs_diff_eq!(p, 3.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(
            role_prob(&c, UserRole::Seeker, 1.0, Some(&[2, 0, 0, 0])),
            Err(EngageError::Integrity(_))
        ));
    }

    #[test]
    fn log_weights_normalize() {
        let mut w = vec![-1000.0, -1001.0, -1e9];
        normalize_log_weights(&mut w);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[0] / w[1], 1f64.exp(), epsilon = 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::new(0, 1).validate().is_err());
        assert!(FitConfig { n_sweeps: 0, ..FitConfig::new(2, 1) }.validate().is_err());
        assert!(FitConfig { early_stop_frac: 1.0, ..FitConfig::new(2, 1) }.validate().is_err());
        let c = FitConfig::new(20, 1);
        assert_eq!(c.alpha_e(), 2.5);
        assert_eq!(c.alpha_r(), 12.5);
    }
}
