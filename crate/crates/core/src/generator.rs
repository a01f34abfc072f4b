//! Synthetic corpora drawn from the engagement model's generative process:
//! pick a cluster from `theta_E`, a scaled length from the cluster's length
//! Beta, then for every reply a role from the cluster's role distribution
//! and a scaled delay from its delay Beta.
//!
//! I.i.d. roles can describe threads that cannot exist (a first reply that
//! is not the first peer-supporter, a seeker replying to themself, an
//! "existing" supporter with nobody to be). Such draws are repaired, or
//! redrawn under [`RepairMode::Reject`], and counted in the report.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Reply, Thread, UserRole};
use crate::error::{EngageError, Result};
use crate::format::{check_format, Provenance, SPEC_FORMAT, TABLE_FORMAT};
use crate::mixture::BetaParams;
use crate::scaling::ScalingParams;

/// Range Beta parameters are drawn from in [`sample_spec`].
pub const SPEC_BETA_RANGE: (f64, f64) = (0.5, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairMode {
    /// Replace an impossible role with the nearest valid one.
    Repair,
    /// Redraw from the cluster's role distribution, falling back to repair
    /// after a bounded number of attempts.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationOptions {
    pub len_min: u32,
    pub len_max: u32,
    /// Scaled delay 1 maps to this many seconds.
    pub max_delta_seconds: f64,
    pub epsilon: f64,
    /// Size of the shared user pool; `None` means half the thread count.
    pub n_users: Option<usize>,
    /// Fraction of threads generated with no replies, outside any cluster.
    pub isolated_fraction: f64,
    pub start_timestamp: i64,
    /// Seed posts are spread uniformly over this window.
    pub time_span_seconds: i64,
    pub repair: RepairMode,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            len_min: 2,
            len_max: 50,
            max_delta_seconds: 4.0 * 3600.0,
            epsilon: 1e-6,
            n_users: None,
            isolated_fraction: 0.0,
            start_timestamp: 1_600_000_000,
            time_span_seconds: 180 * 24 * 3600,
            repair: RepairMode::Repair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub theta_e: Vec<f64>,
    /// Role distribution per cluster, indexed like [`UserRole::index`].
    pub role_dists: Vec<[f64; UserRole::COUNT]>,
    pub length: Vec<BetaParams>,
    pub delta: Vec<BetaParams>,
    pub n_threads: usize,
    pub seed: u64,
    #[serde(default)]
    pub options: GenerationOptions,
}

impl GroundTruthSpec {
    pub fn k(&self) -> usize {
        self.theta_e.len()
    }

    pub fn with_threads(mut self, n: usize) -> Self {
        self.n_threads = n;
        self
    }

    pub fn with_options(mut self, options: GenerationOptions) -> Self {
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.role_dists.len() != k || self.length.len() != k || self.delta.len() != k {
            return Err(EngageError::Config("spec arrays must all have K entries, K >= 1".into()));
        }
        let is_simplex = |p: &[f64]| p.iter().all(|x| *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !is_simplex(&self.theta_e) {
            return Err(EngageError::Config("theta_E must be a probability vector".into()));
        }
        if let Some(e) = self.role_dists.iter().position(|p| !is_simplex(p)) {
            return Err(EngageError::Config(format!("role distribution of cluster {e} does not sum to 1")));
        }
        for b in self.length.iter().chain(&self.delta) {
            BetaParams::new(b.alpha, b.beta)?;
        }
        let o = &self.options;
        if o.len_min < 1 || o.len_max <= o.len_min.max(2) {
            return Err(EngageError::Config(format!("length range [{}, {}] invalid", o.len_min, o.len_max)));
        }
        if !(o.max_delta_seconds > 0.0) || !(0.0..1.0).contains(&o.isolated_fraction) {
            return Err(EngageError::Config("max_delta_seconds must be positive, isolated_fraction in [0, 1)".into()));
        }
        if o.time_span_seconds < 1 {
            return Err(EngageError::Config("time span must be positive".into()));
        }
        self.scaling().validate()
    }

    /// Scaling constants consistent with how lengths and delays are mapped
    /// back to posts and seconds.
    pub fn scaling(&self) -> ScalingParams {
        let o = &self.options;
        ScalingParams {
            len_min: o.len_min,
            len_max: o.len_max,
            delta_min: 0.0,
            delta_max: o.max_delta_seconds,
            delta_cap: o.max_delta_seconds,
            epsilon: o.epsilon,
            log_deltas: false,
        }
    }

    /// Four clusters that differ in length, delay and role mix; the default
    /// recovery benchmark.
    pub fn well_separated(n_threads: usize, seed: u64) -> GroundTruthSpec {
        let b = |a, b| BetaParams { alpha: a, beta: b };
        GroundTruthSpec {
            theta_e: vec![0.35, 0.25, 0.2, 0.2],
            role_dists: vec![
                // short, slow, many one-off supporters
                [0.02, 0.90, 0.06, 0.02],
                // short, quick, seeker answers a crowd
                [0.02, 0.60, 0.02, 0.36],
                // long, quick back-and-forth
                [0.02, 0.02, 0.48, 0.48],
                // long, slow group discussion
                [0.02, 0.30, 0.38, 0.30],
            ],
            length: vec![b(2.0, 30.0), b(3.0, 20.0), b(5.0, 5.0), b(8.0, 4.0)],
            delta: vec![b(8.0, 3.0), b(1.5, 9.0), b(2.0, 12.0), b(5.0, 5.0)],
            n_threads,
            seed,
            options: GenerationOptions::default(),
        }
    }
}

fn dirichlet<R: Rng>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive Dirichlet concentration");
    let mut v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // every gamma draw underflowed: all mass on one component
        let hot = rng.random_range(0..n);
        v.iter_mut().enumerate().for_each(|(i, x)| *x = if i == hot { 1.0 } else { 0.0 });
    }
    v
}

/// Draws a ground-truth parameter set: `theta_E ~ Dir(alpha_E)`, each role
/// distribution `~ Dir(alpha_R)`, Beta shapes uniform on [`SPEC_BETA_RANGE`].
pub fn sample_spec(k: usize, alpha_e: f64, alpha_r: f64, seed: u64) -> Result<GroundTruthSpec> {
    if k == 0 {
        return Err(EngageError::Config("K must be at least 1".into()));
    }
    if !(alpha_e > 0.0 && alpha_r > 0.0) {
        return Err(EngageError::Config("Dirichlet priors must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_e = if k == 1 { vec![1.0] } else { dirichlet(alpha_e, k, &mut rng) };
    let role_dists = (0..k)
        .map(|_| {
            let v = dirichlet(alpha_r, UserRole::COUNT, &mut rng);
            [v[0], v[1], v[2], v[3]]
        })
        .collect();
    let (lo, hi) = SPEC_BETA_RANGE;
    let draw = |rng: &mut ChaCha8Rng| BetaParams { alpha: rng.random_range(lo..=hi), beta: rng.random_range(lo..=hi) };
    let length = (0..k).map(|_| draw(&mut rng)).collect();
    let delta = (0..k).map(|_| draw(&mut rng)).collect();
    Ok(GroundTruthSpec { theta_e, role_dists, length, delta, n_threads: 0, seed, options: GenerationOptions::default() })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    /// First replies whose drawn role was overridden to first peer-supporter.
    pub first_reply_overrides: usize,
    /// Later replies whose drawn role was structurally impossible.
    pub repairs: usize,
    /// Redraws performed under [`RepairMode::Reject`].
    pub rejections: usize,
}

impl GenerationReport {
    fn absorb(&mut self, o: &GenerationReport) {
        self.first_reply_overrides += o.first_reply_overrides;
        self.repairs += o.repairs;
        self.rejections += o.rejections;
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// True cluster of every non-isolated thread.
    pub truth: BTreeMap<String, usize>,
    pub report: GenerationReport,
}

fn categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, x) in p.iter().enumerate() {
        if u < *x {
            return i;
        }
        u -= x;
    }
    p.iter().rposition(|x| *x > 0.0).unwrap_or(p.len() - 1)
}

const MAX_REDRAWS: usize = 64;

struct ThreadBuilder<'a> {
    seeker: usize,
    peers: Vec<usize>,
    prev: usize,
    n_users: usize,
    rng: &'a mut ChaCha8Rng,
}

impl ThreadBuilder<'_> {
    fn valid(&self, role: UserRole) -> bool {
        match role {
            UserRole::FirstPeerSupporter => false,
            UserRole::NewPeerSupporter => true,
            UserRole::ExistingPeerSupporter => self.peers.iter().any(|p| *p != self.prev),
            UserRole::Seeker => self.prev != self.seeker,
        }
    }

    fn repaired(&self, role: UserRole) -> UserRole {
        match role {
            UserRole::Seeker if !self.valid(role) => UserRole::ExistingPeerSupporter,
            r if self.valid(r) => r,
            _ => UserRole::NewPeerSupporter,
        }
    }

    /// Picks a user id consistent with `role`. Fresh users come from the
    /// shared pool when possible, otherwise get a pool-external id.
    fn author(&mut self, role: UserRole) -> usize {
        let user = match role {
            UserRole::Seeker => self.seeker,
            UserRole::ExistingPeerSupporter => {
                let candidates: Vec<usize> = self.peers.iter().copied().filter(|p| *p != self.prev).collect();
                candidates[self.rng.random_range(0..candidates.len())]
            }
            UserRole::FirstPeerSupporter | UserRole::NewPeerSupporter => {
                let mut u = None;
                for _ in 0..MAX_REDRAWS {
                    let c = self.rng.random_range(0..self.n_users);
                    if c != self.seeker && !self.peers.contains(&c) {
                        u = Some(c);
                        break;
                    }
                }
                let u = u.unwrap_or(self.n_users + self.peers.len());
                self.peers.push(u);
                u
            }
        };
        self.prev = user;
        user
    }
}

fn generate_thread(spec: &GroundTruthSpec, index: usize, n_users: usize) -> (Thread, Option<usize>, GenerationReport) {
    let o = &spec.options;
    let scaling = spec.scaling();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let mut report = GenerationReport::default();

    let thread_id = format!("t{index:07}");
    let seed_timestamp = o.start_timestamp + rng.random_range(0..o.time_span_seconds);
    let seeker = rng.random_range(0..n_users);
    let isolated = o.isolated_fraction > 0.0 && rng.random::<f64>() < o.isolated_fraction;
    let mut thread = Thread {
        thread_id,
        seeker_id: user_name(seeker),
        seed_timestamp,
        seed_word_count: None,
        seed_score: None,
        replies: Vec::new(),
        length_scaled: None,
    };
    if isolated {
        thread.length_scaled = Some(scaling.scale_length(1));
        return (thread, None, report);
    }

    let e = categorical(&spec.theta_e, &mut rng);
    let len_dist = BetaDist::new(spec.length[e].alpha, spec.length[e].beta).expect("validated Beta");
    let delta_dist = BetaDist::new(spec.delta[e].alpha, spec.delta[e].beta).expect("validated Beta");
    let x: f64 = len_dist.sample(&mut rng);
    let lo = o.len_min.max(2);
    let k = scaling.unscale_length(x).round().clamp(f64::from(lo), f64::from(o.len_max)) as usize;
    thread.length_scaled = Some(scaling.scale_length(k));

    let mut b = ThreadBuilder { seeker, peers: Vec::new(), prev: seeker, n_users, rng: &mut rng };
    let mut clock = seed_timestamp as f64;
    for j in 0..k - 1 {
        let drawn = UserRole::from_index(categorical(&spec.role_dists[e], b.rng)).expect("role index");
        let role = if j == 0 {
            if drawn != UserRole::FirstPeerSupporter {
                report.first_reply_overrides += 1;
            }
            UserRole::FirstPeerSupporter
        } else if b.valid(drawn) {
            drawn
        } else {
            let mut role = None;
            if o.repair == RepairMode::Reject {
                for _ in 0..MAX_REDRAWS {
                    report.rejections += 1;
                    let r = UserRole::from_index(categorical(&spec.role_dists[e], b.rng)).expect("role index");
                    if b.valid(r) {
                        role = Some(r);
                        break;
                    }
                }
            }
            role.unwrap_or_else(|| {
                report.repairs += 1;
                b.repaired(drawn)
            })
        };
        let user = b.author(role);
        let d: f64 = delta_dist.sample(b.rng);
        let delta_scaled = d.clamp(o.epsilon, 1.0 - o.epsilon);
        let delta_seconds = scaling.unscale_delta(delta_scaled);
        clock += delta_seconds;
        thread.replies.push(Reply {
            user_id: user_name(user),
            role,
            timestamp: clock.round() as i64,
            delta_seconds,
            delta_scaled: Some(delta_scaled),
            word_count: None,
            score: None,
        });
    }
    (thread, Some(e), report)
}

fn user_name(u: usize) -> String {
    format!("u{u}")
}

/// Generates `spec.n_threads` scaled, role-labeled threads and their true
/// cluster labels. Every thread uses its own RNG stream, so output does not
/// depend on parallelism.
pub fn generate_corpus(spec: &GroundTruthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let n_users = spec.options.n_users.unwrap_or(spec.n_threads / 2).max(16);
    let rows: Vec<_> = (0..spec.n_threads)
        .into_par_iter()
        .map(|i| generate_thread(spec, i, n_users))
        .collect();
    let mut report = GenerationReport::default();
    let mut truth = BTreeMap::new();
    let mut threads = Vec::with_capacity(rows.len());
    for (t, e, r) in rows {
        report.absorb(&r);
        if let Some(e) = e {
            truth.insert(t.thread_id.clone(), e);
        }
        threads.push(t);
    }
    Ok(SyntheticCorpus { corpus: Corpus { threads, scaling: Some(spec.scaling()) }, truth, report })
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand Index between two labelings of the same thread ids.
pub fn recovery_score(truth: &BTreeMap<String, usize>, inferred: &BTreeMap<String, usize>) -> Result<f64> {
    if truth.len() != inferred.len() || truth.keys().zip(inferred.keys()).any(|(a, b)| a != b) {
        return Err(EngageError::Mismatch("partitions cover different thread ids".into()));
    }
    let labels: Vec<(usize, usize)> = truth.values().copied().zip(inferred.values().copied()).collect();
    Ok(adjusted_rand_index(&labels))
}

pub fn adjusted_rand_index(pairs: &[(usize, usize)]) -> f64 {
    let n = pairs.len() as u64;
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for &(a, b) in pairs {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        // both partitions trivial in the same way
        return if index == max { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// `thread_id,cluster` for every non-isolated thread.
pub fn write_truth_csv<W: Write>(truth: &BTreeMap<String, usize>, mut writer: W, provenance: &Provenance) -> Result<()> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["thread_id", "cluster"])?;
    for (id, e) in truth {
        w.write_record([id.as_str(), &e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `thread_id,cluster` table, skipping `#` comment lines.
pub fn read_truth_csv<R: Read>(reader: R) -> Result<BTreeMap<String, usize>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut out = BTreeMap::new();
    for row in r.deserialize::<(String, usize)>() {
        let (id, e) = row?;
        if out.insert(id.clone(), e).is_some() {
            return Err(EngageError::Integrity(format!("thread {id} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecDocument {
    format: String,
    provenance: Provenance,
    spec: GroundTruthSpec,
}

pub fn write_spec(spec: &GroundTruthSpec, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
    let doc = SpecDocument { format: SPEC_FORMAT.to_string(), provenance: provenance.clone(), spec: spec.clone() };
    fs::write(path.as_ref(), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

pub fn read_spec(path: impl AsRef<Path>) -> Result<GroundTruthSpec> {
    let s = fs::read_to_string(path.as_ref())?;
    let v: serde_json::Value = serde_json::from_str(&s)?;
    check_format(SPEC_FORMAT, v.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>"))?;
    let doc: SpecDocument = serde_json::from_value(v)?;
    doc.spec.validate()?;
    Ok(doc.spec)
}
