//! Analyses of seeker and peer-supporter behavior inside threads.

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::retention::{first_threads, summarize, RetentionOptions, RetentionRole};
use super::stats::{bootstrap_ci, bootstrap_mean_ci, welch_t_test, BootstrapConfig, WelchResult};
use crate::corpus::{Corpus, Thread, UserRole};
use crate::error::{EngageError, Result};
use crate::indicators::{classify_interaction_degree, InteractionDegree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    /// Distinct peer-supporters who replied before the seeker's first reply.
    pub position: usize,
    pub n_threads: u64,
    pub n_md: u64,
    pub fraction_md: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Position of the seeker's first reply, counted in distinct
/// peer-supporters before it; `None` when the seeker never replies.
pub fn seeker_position(thread: &Thread) -> Option<usize> {
    let mut peers: HashSet<&str> = HashSet::new();
    for r in &thread.replies {
        if r.role == UserRole::Seeker {
            return Some(peers.len());
        }
        peers.insert(&r.user_id);
    }
    None
}

/// Share of mutual-discourse threads among threads where the seeker replied,
/// by the seeker's position.
pub fn md_given_seeker_position(corpus: &Corpus, cfg: &BootstrapConfig) -> Result<Vec<PositionRow>> {
    cfg.validate()?;
    let mut groups: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for t in &corpus.threads {
        if let Some(pos) = seeker_position(t) {
            groups.entry(pos).or_default().push(classify_interaction_degree(t) == InteractionDegree::MutualDiscourse);
        }
    }
    groups
        .into_par_iter()
        .map(|(position, outcomes)| {
            let n = outcomes.len() as u64;
            let k = outcomes.iter().filter(|x| **x).count() as u64;
            let fraction_md = k as f64 / n as f64;
            let (lo, hi) = bootstrap_ci(&outcomes, cfg)?;
            Ok(PositionRow {
                position,
                n_threads: n,
                n_md: k,
                fraction_md,
                ci_low: lo.min(fraction_md),
                ci_high: hi.max(fraction_md),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    /// 1 for the quickest responders.
    pub quartile: usize,
    pub delta_min_s: f64,
    pub delta_max_s: f64,
    pub n_users: u64,
    pub n_retained: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Quartile (1 to 4) of each value. The q-th boundary is the value at rank
/// `ceil(q n / 4)`; a value goes to the first quartile whose boundary it
/// does not exceed, so tied values share the lower quartile.
pub fn quartile_buckets(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let bounds: Vec<f64> = (1..4).map(|q| sorted[(q * n).div_ceil(4).max(1) - 1]).collect();
    values.iter().map(|v| bounds.iter().position(|b| v <= b).map_or(4, |q| q + 1)).collect()
}

/// Peer-supporter retention by how quickly they answered in their first
/// thread: the delay before their first reply there, split into quartiles.
pub fn ps_first_response_quartiles(corpus: &Corpus, opts: &RetentionOptions) -> Result<Vec<QuartileRow>> {
    opts.bootstrap.validate()?;
    let firsts = first_threads(corpus, RetentionRole::PeerSupporter, opts.horizon_seconds);
    if firsts.len() < 4 {
        return Err(EngageError::InsufficientData(format!(
            "{} first-time peer-supporters; quartiles need at least 4",
            firsts.len()
        )));
    }
    let deltas: Vec<f64> = firsts
        .iter()
        .map(|f| {
            corpus.threads[f.thread]
                .replies
                .iter()
                .find(|r| r.user_id == f.user_id)
                .map_or(f64::NAN, |r| r.delta_seconds)
        })
        .collect();
    let buckets = quartile_buckets(&deltas);
    let mut groups: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut ranges: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for ((f, d), q) in firsts.iter().zip(&deltas).zip(&buckets) {
        groups.entry(q.to_string()).or_default().push(f.retained);
        let r = ranges.entry(*q).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        *r = (r.0.min(*d), r.1.max(*d));
    }
    let rows = summarize(groups, &opts.bootstrap)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let quartile: usize = r.group.parse().expect("quartile keys are integers");
            let (lo, hi) = ranges[&quartile];
            QuartileRow {
                quartile,
                delta_min_s: lo,
                delta_max_s: hi,
                n_users: r.n_users,
                n_retained: r.n_retained,
                fraction: r.fraction,
                ci_low: r.ci_low,
                ci_high: r.ci_high,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub n_threads: u64,
    pub mean_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean peer-supporter delay over mean seeker delay within one thread, when
/// both kinds of reply exist and the seeker's mean delay is positive.
pub fn thread_response_ratio(thread: &Thread) -> Option<f64> {
    let (mut ps, mut n_ps, mut sk, mut n_sk) = (0.0, 0u32, 0.0, 0u32);
    for r in &thread.replies {
        if r.role == UserRole::Seeker {
            sk += r.delta_seconds;
            n_sk += 1;
        } else {
            ps += r.delta_seconds;
            n_ps += 1;
        }
    }
    if n_ps == 0 || n_sk == 0 || sk <= 0.0 {
        return None;
    }
    Some((ps / f64::from(n_ps)) / (sk / f64::from(n_sk)))
}

/// Mean over qualifying threads of [`thread_response_ratio`].
pub fn response_time_ratio(
    corpus: &Corpus,
    filter: impl Fn(&Thread) -> bool + Sync,
    cfg: &BootstrapConfig,
) -> Result<RatioSummary> {
    cfg.validate()?;
    let ratios: Vec<f64> =
        corpus.threads.iter().filter(|t| filter(t)).filter_map(thread_response_ratio).collect();
    if ratios.is_empty() {
        return Err(EngageError::InsufficientData("no thread has both peer-supporter and seeker replies".into()));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = bootstrap_mean_ci(&ratios, cfg)?;
    Ok(RatioSummary { n_threads: ratios.len() as u64, mean_ratio: mean, ci_low: lo.min(mean), ci_high: hi.max(mean) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarField {
    Score,
    WordCount,
}

impl FromStr for ScalarField {
    type Err = EngageError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "score" => Ok(ScalarField::Score),
            "word_count" | "words" => Ok(ScalarField::WordCount),
            _ => Err(EngageError::Config(format!("unknown field {s:?}; expected score or word_count"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarComparison {
    pub n_a: u64,
    pub n_b: u64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub welch: WelchResult,
}

/// The field on the seeker's first reply of each thread of `degree`.
fn seeker_first_reply_values(corpus: &Corpus, degree: InteractionDegree, field: ScalarField) -> Vec<f64> {
    corpus
        .threads
        .iter()
        .filter(|t| classify_interaction_degree(t) == degree)
        .filter_map(|t| t.replies.iter().find(|r| r.role == UserRole::Seeker))
        .filter_map(|r| match field {
            ScalarField::Score => r.score,
            ScalarField::WordCount => r.word_count.map(f64::from),
        })
        .collect()
}

/// Compares a per-reply scalar on seekers' first replies between two
/// interaction degrees.
pub fn compare_group_scalar(
    corpus: &Corpus,
    group_a: InteractionDegree,
    group_b: InteractionDegree,
    field: ScalarField,
) -> Result<ScalarComparison> {
    let a = seeker_first_reply_values(corpus, group_a, field);
    let b = seeker_first_reply_values(corpus, group_b, field);
    for (g, v) in [(group_a, &a), (group_b, &b)] {
        if v.is_empty() {
            return Err(EngageError::InsufficientData(format!("{field:?} is absent on seeker replies in {g} threads")));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ScalarComparison {
        n_a: a.len() as u64,
        n_b: b.len() as u64,
        mean_a: mean(&a),
        mean_b: mean(&b),
        welch: welch_t_test(&a, &b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartile_sizes_and_ties() {
        for n in 4..40 {
            let xs: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
            let b = quartile_buckets(&xs);
            let counts: Vec<usize> = (1..=4).map(|q| b.iter().filter(|x| **x == q).count()).collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "n={n}: {counts:?}");
            // quicker values never land in a later quartile
            for i in 0..n {
                for j in 0..n {
                    if xs[i] < xs[j] {
                        assert!(b[i] <= b[j]);
                    }
                }
            }
        }
        assert_eq!(quartile_buckets(&[5.0; 9]), vec![1; 9]);
        assert_eq!(quartile_buckets(&[1.0, 1.0, 1.0, 9.0]), vec![1, 1, 1, 4]);
    }
}
