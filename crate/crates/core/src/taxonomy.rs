//! Named engagement patterns synthesized from fitted clusters.
//!
//! Degree and party come from a majority vote over each cluster's threads.
//! Size and speed come from exact two-group splits of the clusters' expected
//! scaled length and delay. Clusters that share a label form one pattern;
//! isolated threads form their own leaf.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::corpus::{Corpus, UserRole};
use crate::error::{EngageError, Result};
use crate::format::{check_format, Provenance, TAXONOMY_FORMAT};
use crate::indicators::{classify_interaction_degree, count_peer_supporters, median, InteractionDegree, PartyClass};
use crate::mixture::{argmax, cluster_log_scores, BetaParams, EngagementModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeLabel {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeedLabel {
    Quick,
    Slow,
}

/// Composite pattern name. Isolated labels carry no party, speed or size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PatternLabel {
    degree: InteractionDegree,
    party: Option<PartyClass>,
    speed: Option<SpeedLabel>,
    size: Option<SizeLabel>,
}

impl PatternLabel {
    pub const ISOLATED: PatternLabel = PatternLabel { degree: InteractionDegree::Isolated, party: None, speed: None, size: None };

    pub fn new(degree: InteractionDegree, party: PartyClass, speed: SpeedLabel, size: SizeLabel) -> Result<PatternLabel> {
        if degree == InteractionDegree::Isolated || party == PartyClass::Isolated {
            return Err(EngageError::Config("non-isolated pattern needs a non-isolated degree and party".into()));
        }
        Ok(PatternLabel { degree, party: Some(party), speed: Some(speed), size: Some(size) })
    }

    pub fn degree(&self) -> InteractionDegree {
        self.degree
    }

    pub fn party(&self) -> Option<PartyClass> {
        self.party
    }

    pub fn speed(&self) -> Option<SpeedLabel> {
        self.speed
    }

    pub fn size(&self) -> Option<SizeLabel> {
        self.size
    }

    pub fn is_isolated(&self) -> bool {
        self.degree == InteractionDegree::Isolated
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.size, self.speed, self.party) {
            (Some(size), Some(speed), Some(party)) => {
                write!(f, "{size:?} {speed:?} {party} {}", self.degree.abbrev())
            }
            _ => f.write_str("Isolated"),
        }
    }
}

impl FromStr for PatternLabel {
    type Err = EngageError;

    /// Parses names such as `"Long Quick Two-Party MD"` or `"Isolated"`.
    fn from_str(s: &str) -> Result<PatternLabel> {
        let words: Vec<&str> = s.split_whitespace().collect();
        if words == ["Isolated"] {
            return Ok(PatternLabel::ISOLATED);
        }
        let bad = || EngageError::Format(format!("cannot parse pattern name {s:?}"));
        let [size, speed, party, degree] = words[..] else { return Err(bad()) };
        let size = match size {
            "Short" => SizeLabel::Short,
            "Long" => SizeLabel::Long,
            _ => return Err(bad()),
        };
        let speed = match speed {
            "Quick" => SpeedLabel::Quick,
            "Slow" => SpeedLabel::Slow,
            _ => return Err(bad()),
        };
        let party = match party {
            "Two-Party" => PartyClass::TwoParty,
            "Multi-Party" => PartyClass::MultiParty,
            _ => return Err(bad()),
        };
        let degree = InteractionDegree::ALL[1..].iter().copied().find(|d| d.abbrev() == degree).ok_or_else(bad)?;
        PatternLabel::new(degree, party, speed, size)
    }
}

impl From<PatternLabel> for String {
    fn from(l: PatternLabel) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for PatternLabel {
    type Error = EngageError;

    fn try_from(s: String) -> Result<PatternLabel> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterLabel {
    Pattern(PatternLabel),
    /// No threads; left out of the taxonomy.
    Degenerate,
}

impl ClusterLabel {
    pub fn pattern(&self) -> Option<PatternLabel> {
        match self {
            ClusterLabel::Pattern(p) => Some(*p),
            ClusterLabel::Degenerate => None,
        }
    }
}

/// Optimal split of `values` into a lower and an upper group minimizing the
/// within-group sum of squares. Returns the smallest value of the upper
/// group, or `None` when there are fewer than two distinct values.
pub fn two_means_threshold(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let total: f64 = v.iter().sum();
    let total_sq: f64 = v.iter().map(|x| x * x).sum();
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for i in 1..n {
        sum += v[i - 1];
        sq += v[i - 1] * v[i - 1];
        if v[i] == v[i - 1] {
            continue;
        }
        let (nl, nr) = (i as f64, (n - i) as f64);
        let sse = (sq - sum * sum / nl) + ((total_sq - sq) - (total - sum).powi(2) / nr);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, v[i]));
        }
    }
    best.map(|(_, t)| t)
}

fn majority<T: Copy + Ord>(votes: impl Iterator<Item = T>) -> Option<T> {
    let mut tally: BTreeMap<T, usize> = BTreeMap::new();
    for v in votes {
        *tally.entry(v).or_default() += 1;
    }
    // iteration is ascending, so the lowest value wins ties
    tally.into_iter().fold(None, |best: Option<(T, usize)>, (v, n)| match best {
        Some((_, b)) if b >= n => best,
        _ => Some((v, n)),
    })
    .map(|(v, _)| v)
}

/// Cluster of every non-isolated thread in `corpus`: the model's fitted
/// assignment where it has one, otherwise the most probable cluster.
pub fn resolve_assignments(model: &EngagementModel, corpus: &Corpus) -> Result<BTreeMap<String, usize>> {
    let rows: Vec<(String, usize)> = corpus
        .threads
        .par_iter()
        .filter(|t| !t.is_isolated())
        .map(|t| {
            let e = match model.assignments.get(&t.thread_id) {
                Some(&e) => e,
                None => argmax(&cluster_log_scores(t, model)?),
            };
            Ok((t.thread_id.clone(), e))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().collect())
}

/// Expected scaled length and delay of each cluster's Beta shapes.
fn expected_scaled(model: &EngagementModel) -> Vec<(f64, f64)> {
    model.clusters.iter().map(|c| (c.length.mean(), c.delta.mean())).collect()
}

fn label_clusters(
    model: &EngagementModel,
    corpus: &Corpus,
    assignments: &BTreeMap<String, usize>,
) -> Vec<ClusterLabel> {
    let mut votes: Vec<Vec<(InteractionDegree, PartyClass)>> = vec![Vec::new(); model.k];
    for t in &corpus.threads {
        if let Some(&e) = assignments.get(&t.thread_id) {
            votes[e].push((classify_interaction_degree(t), count_peer_supporters(t).1));
        }
    }
    let live: Vec<usize> = (0..model.k).filter(|&e| !votes[e].is_empty()).collect();
    let expected = expected_scaled(model);
    let long_from = two_means_threshold(&live.iter().map(|&e| expected[e].0).collect::<Vec<_>>());
    let slow_from = two_means_threshold(&live.iter().map(|&e| expected[e].1).collect::<Vec<_>>());
    votes
        .par_iter()
        .enumerate()
        .map(|(e, v)| {
            let Some(degree) = majority(v.iter().map(|x| x.0)) else {
                warn!("cluster {e} has no threads and is left out of the taxonomy");
                return ClusterLabel::Degenerate;
            };
            let party = majority(v.iter().map(|x| x.1)).unwrap_or(PartyClass::TwoParty);
            let size = match long_from {
                Some(t) if expected[e].0 >= t => SizeLabel::Long,
                _ => SizeLabel::Short,
            };
            // without a split no cluster is Long or Quick
            let speed = match slow_from {
                Some(t) if expected[e].1 < t => SpeedLabel::Quick,
                _ => SpeedLabel::Slow,
            };
            ClusterLabel::Pattern(PatternLabel { degree, party: Some(party), speed: Some(speed), size: Some(size) })
        })
        .collect()
}

/// Automatic label of one cluster, given the fitted model and the corpus it
/// was fitted on. Size and speed depend on every cluster's shapes.
pub fn label_cluster(cluster_id: usize, model: &EngagementModel, corpus: &Corpus) -> Result<ClusterLabel> {
    if cluster_id >= model.k {
        return Err(EngageError::Config(format!("cluster {cluster_id} out of range for K = {}", model.k)));
    }
    let assignments = resolve_assignments(model, corpus)?;
    Ok(label_clusters(model, corpus, &assignments)[cluster_id])
}

/// Summary of the threads belonging to one pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub label: PatternLabel,
    pub n_threads: u64,
    /// Share of all corpus threads.
    pub fraction: f64,
    pub clusters: Vec<usize>,
    /// Share of replies by role, in [`UserRole::ALL`] order.
    pub role_fractions: [f64; UserRole::COUNT],
    pub mean_length: f64,
    pub median_length: f64,
    /// Reply delays in seconds; absent for the isolated leaf.
    pub mean_delta_s: Option<f64>,
    pub median_delta_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTaxonomy {
    /// Isolated leaf first, then by degree, party, speed and size.
    pub patterns: Vec<Pattern>,
    pub isolated_fraction: f64,
    pub n_threads: u64,
    /// Label of every cluster, by cluster index.
    pub cluster_labels: Vec<ClusterLabel>,
    /// Cluster of every non-isolated thread.
    pub assignments: BTreeMap<String, usize>,
}

impl PatternTaxonomy {
    /// Pattern of a thread, or `None` for threads the taxonomy has not seen.
    /// Threads not in `assignments` are taken to be isolated.
    pub fn pattern_of(&self, thread_id: &str, is_isolated: bool) -> Option<PatternLabel> {
        if is_isolated {
            return Some(PatternLabel::ISOLATED);
        }
        let e = *self.assignments.get(thread_id)?;
        self.cluster_labels.get(e)?.pattern()
    }

    /// Patterns grouped by degree, then party.
    pub fn tree(&self) -> BTreeMap<InteractionDegree, BTreeMap<Option<PartyClass>, Vec<&Pattern>>> {
        let mut tree: BTreeMap<_, BTreeMap<_, Vec<_>>> = BTreeMap::new();
        for p in &self.patterns {
            tree.entry(p.label.degree).or_default().entry(p.label.party).or_default().push(p);
        }
        tree
    }

    pub fn total_fraction(&self) -> f64 {
        self.patterns.iter().map(|p| p.fraction).sum()
    }
}

#[derive(Default)]
struct Accumulator {
    n: u64,
    roles: [u64; UserRole::COUNT],
    lengths: Vec<f64>,
    deltas: Vec<f64>,
    clusters: Vec<usize>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Labels every cluster, applies `overrides` (cluster id → label) and groups
/// clusters with equal labels into patterns.
pub fn build_taxonomy_with(
    model: &EngagementModel,
    corpus: &Corpus,
    overrides: &BTreeMap<usize, PatternLabel>,
) -> Result<PatternTaxonomy> {
    if let Some(e) = overrides.keys().find(|&&e| e >= model.k) {
        return Err(EngageError::Config(format!("label override for cluster {e}, but K = {}", model.k)));
    }
    if overrides.values().any(PatternLabel::is_isolated) {
        return Err(EngageError::Config("clusters cannot be labeled Isolated".into()));
    }
    let assignments = resolve_assignments(model, corpus)?;
    let mut labels = label_clusters(model, corpus, &assignments);
    for (&e, &l) in overrides {
        if labels[e] != ClusterLabel::Degenerate {
            labels[e] = ClusterLabel::Pattern(l);
        }
    }

    let mut groups: BTreeMap<PatternLabel, Accumulator> = BTreeMap::new();
    for (e, l) in labels.iter().enumerate() {
        if let Some(p) = l.pattern() {
            groups.entry(p).or_default().clusters.push(e);
        }
    }
    let mut n_isolated = 0u64;
    for t in &corpus.threads {
        let label = if t.is_isolated() {
            n_isolated += 1;
            PatternLabel::ISOLATED
        } else {
            let e = assignments[&t.thread_id];
            labels[e].pattern().ok_or_else(|| EngageError::Integrity(format!("thread in empty cluster {e}")))?
        };
        let acc = groups.entry(label).or_default();
        acc.n += 1;
        for (a, b) in acc.roles.iter_mut().zip(t.role_counts()) {
            *a += u64::from(b);
        }
        acc.lengths.push(t.length() as f64);
        acc.deltas.extend(t.replies.iter().map(|r| r.delta_seconds));
    }

    let n_threads = corpus.len() as u64;
    let patterns: Vec<Pattern> = groups
        .into_iter()
        .filter(|(_, a)| a.n > 0)
        .map(|(label, a)| {
            let n_replies: u64 = a.roles.iter().sum();
            let mut role_fractions = [0.0; UserRole::COUNT];
            if n_replies > 0 {
                for (f, c) in role_fractions.iter_mut().zip(a.roles) {
                    *f = c as f64 / n_replies as f64;
                }
            }
            Pattern {
                label,
                n_threads: a.n,
                fraction: a.n as f64 / n_threads as f64,
                clusters: a.clusters,
                role_fractions,
                mean_length: mean(&a.lengths).unwrap_or(0.0),
                median_length: median(&a.lengths).unwrap_or(0.0),
                mean_delta_s: mean(&a.deltas),
                median_delta_s: median(&a.deltas),
            }
        })
        .collect();
    let isolated_fraction = if n_threads == 0 { 0.0 } else { n_isolated as f64 / n_threads as f64 };
    Ok(PatternTaxonomy { patterns, isolated_fraction, n_threads, cluster_labels: labels, assignments })
}

pub fn build_taxonomy(model: &EngagementModel, corpus: &Corpus) -> Result<PatternTaxonomy> {
    build_taxonomy_with(model, corpus, &BTreeMap::new())
}

/// Reads a label-override file: a JSON object from cluster id to pattern
/// name, e.g. `{"3": "Long Quick Two-Party MD"}`.
pub fn read_label_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<usize, PatternLabel>> {
    let raw: BTreeMap<String, PatternLabel> = serde_json::from_str(&fs::read_to_string(path.as_ref())?)?;
    raw.into_iter()
        .map(|(k, v)| {
            let e = k.trim().parse::<usize>().map_err(|_| EngageError::Format(format!("cluster id {k:?} is not an integer")))?;
            Ok((e, v))
        })
        .collect()
}

/// Model-side description of one cluster, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub label: ClusterLabel,
    pub n_threads_fit: u64,
    pub role_distribution: [f64; UserRole::COUNT],
    pub length_beta: BetaParams,
    pub delta_beta: BetaParams,
    pub expected_length_scaled: f64,
    pub expected_delta_scaled: f64,
    /// Length and delay at the Beta median, mapped back through the scaling.
    pub median_length: f64,
    pub median_delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub format: String,
    pub provenance: Provenance,
    pub taxonomy: PatternTaxonomy,
    pub clusters: Vec<ClusterSummary>,
}

fn beta_median(p: BetaParams) -> f64 {
    Beta::new(p.alpha, p.beta).map_or(p.mean(), |b| b.inverse_cdf(0.5))
}

/// Pairs the taxonomy with per-cluster model statistics.
pub fn render_report(taxonomy: &PatternTaxonomy, model: &EngagementModel, provenance: &Provenance) -> TaxonomyReport {
    let clusters = model
        .clusters
        .iter()
        .enumerate()
        .map(|(e, c)| ClusterSummary {
            cluster: e,
            label: taxonomy.cluster_labels.get(e).copied().unwrap_or(ClusterLabel::Degenerate),
            n_threads_fit: c.n_threads,
            role_distribution: c.role_distribution(model.alpha_r),
            length_beta: c.length,
            delta_beta: c.delta,
            expected_length_scaled: c.length.mean(),
            expected_delta_scaled: c.delta.mean(),
            median_length: model.scaling.unscale_length(beta_median(c.length)),
            median_delta_s: model.scaling.unscale_delta(beta_median(c.delta)),
        })
        .collect();
    TaxonomyReport {
        format: TAXONOMY_FORMAT.to_string(),
        provenance: provenance.clone(),
        taxonomy: taxonomy.clone(),
        clusters,
    }
}

fn bar(f: f64) -> String {
    "#".repeat((f * 20.0).round() as usize)
}

impl TaxonomyReport {
    pub fn to_text(&self) -> String {
        let t = &self.taxonomy;
        let mut s = String::new();
        s.push_str(&format!("# {} ({})\n", self.format, self.provenance.tool_version));
        if let Some(seed) = self.provenance.seed {
            s.push_str(&format!("# seed {seed}\n"));
        }
        s.push_str(&format!("# {} threads, {} patterns\n", t.n_threads, t.patterns.len()));
        for (degree, parties) in t.tree() {
            s.push_str(&format!("\n{degree}\n"));
            for p in parties.values().flatten() {
                s.push_str(&format!(
                    "  {:<32} {:>7.2}%  n={:<8} clusters={:?}\n",
                    p.label.to_string(),
                    100.0 * p.fraction,
                    p.n_threads,
                    p.clusters
                ));
                s.push_str(&format!("    length mean {:.2} median {:.1}", p.mean_length, p.median_length));
                if let (Some(m), Some(md)) = (p.mean_delta_s, p.median_delta_s) {
                    s.push_str(&format!("; delay mean {m:.0}s median {md:.0}s"));
                }
                s.push('\n');
                if !p.label.is_isolated() {
                    for (r, f) in UserRole::ALL.iter().zip(p.role_fractions) {
                        s.push_str(&format!("    {:<24} {:>5.1}% {}\n", r.to_string(), 100.0 * f, bar(f)));
                    }
                }
            }
        }
        if !self.clusters.is_empty() {
            s.push_str("\nclusters\n");
            for c in &self.clusters {
                let name = c.label.pattern().map_or("Degenerate".to_string(), |l| l.to_string());
                s.push_str(&format!(
                    "  {:>3} {:<32} n={:<8} E[len]={:.3} E[delay]={:.3} median length {:.1}, median delay {:.0}s\n",
                    c.cluster,
                    name,
                    c.n_threads_fit,
                    c.expected_length_scaled,
                    c.expected_delta_scaled,
                    c.median_length,
                    c.median_delta_s
                ));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<TaxonomyReport> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_format(TAXONOMY_FORMAT, v.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>"))?;
        Ok(serde_json::from_value(v)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<TaxonomyReport> {
        TaxonomyReport::from_json(&fs::read_to_string(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_compose_and_parse() {
        let l = PatternLabel::new(
            InteractionDegree::MutualDiscourse,
            PartyClass::TwoParty,
            SpeedLabel::Quick,
            SizeLabel::Long,
        )
        .unwrap();
        assert_eq!(l.to_string(), "Long Quick Two-Party MD");
        assert_eq!("Long Quick Two-Party MD".parse::<PatternLabel>().unwrap(), l);
        assert_eq!("Isolated".parse::<PatternLabel>().unwrap(), PatternLabel::ISOLATED);
        for bad in ["", "Long Quick MD", "Long Quick Two-Party Isolated", "Tall Quick Two-Party SI"] {
            assert!(bad.parse::<PatternLabel>().is_err(), "{bad}");
        }
        assert_eq!(serde_json::to_string(&l).unwrap(), "\"Long Quick Two-Party MD\"");
    }

    #[test]
    fn two_means_on_two_points() {
        assert_eq!(two_means_threshold(&[0.8, 0.1]), Some(0.8));
        assert_eq!(two_means_threshold(&[0.3, 0.3]), None);
        assert_eq!(two_means_threshold(&[]), None);
        assert_eq!(two_means_threshold(&[0.1, 0.12, 0.15, 0.7, 0.75]), Some(0.7));
    }

    #[test]
    fn two_means_matches_exhaustive_split() {
        let xs = [0.05, 0.4, 0.41, 0.2, 0.9, 0.33, 0.6, 0.61, 0.07];
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let sse = |g: &[f64]| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let best = (1..v.len())
            .min_by(|&a, &b| (sse(&v[..a]) + sse(&v[a..])).total_cmp(&(sse(&v[..b]) + sse(&v[b..]))))
            .unwrap();
        assert_eq!(two_means_threshold(&xs), Some(v[best]));
    }

    #[test]
    fn majority_breaks_ties_low() {
        use InteractionDegree::*;
        assert_eq!(majority([MutualDiscourse, SingleInteraction].into_iter()), Some(SingleInteraction));
        assert_eq!(
            majority([MutualDiscourse, MutualDiscourse, SingleInteraction].into_iter()),
            Some(MutualDiscourse)
        );
        assert_eq!(majority(std::iter::empty::<InteractionDegree>()), None);
    }
}
