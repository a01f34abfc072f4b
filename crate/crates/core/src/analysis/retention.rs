//! Whether users come back after their first thread.
//!
//! A user's first thread is the earliest thread they seeded (seekers) or
//! the earliest thread they replied to without seeding it (peer-supporters),
//! with ties broken by thread id. They are retained if they author any post
//! or reply in a different thread strictly after the anchor: the seed time
//! for seekers, the first reply time for peer-supporters.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_ci, BootstrapConfig};
use crate::corpus::{Corpus, Thread};
use crate::error::{EngageError, Result};
use crate::indicators::{classify_interaction_degree, count_peer_supporters};
use crate::taxonomy::PatternTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetentionRole {
    Seeker,
    PeerSupporter,
}

impl FromStr for RetentionRole {
    type Err = EngageError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seeker" => Ok(RetentionRole::Seeker),
            "peer" | "peer-supporter" | "peer_supporter" => Ok(RetentionRole::PeerSupporter),
            _ => Err(EngageError::Config(format!("unknown role {s:?}; expected seeker or peer"))),
        }
    }
}

/// What first threads are grouped by. `Size`, `Speed` and `Pattern` read the
/// thread's pattern from a taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupBy {
    Degree,
    Party,
    Size,
    Speed,
    Pattern,
}

impl GroupBy {
    pub fn needs_taxonomy(self) -> bool {
        matches!(self, GroupBy::Size | GroupBy::Speed | GroupBy::Pattern)
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Degree => "degree",
            GroupBy::Party => "party",
            GroupBy::Size => "size",
            GroupBy::Speed => "speed",
            GroupBy::Pattern => "pattern",
        })
    }
}

impl FromStr for GroupBy {
    type Err = EngageError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "degree" => Ok(GroupBy::Degree),
            "party" => Ok(GroupBy::Party),
            "size" => Ok(GroupBy::Size),
            "speed" => Ok(GroupBy::Speed),
            "pattern" => Ok(GroupBy::Pattern),
            _ => Err(EngageError::Config(format!("unknown grouping {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionOptions {
    /// Only activity within this many seconds of the anchor counts.
    pub horizon_seconds: Option<i64>,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub group: String,
    pub n_users: u64,
    pub n_retained: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionTable {
    pub role: RetentionRole,
    pub group_by: GroupBy,
    pub rows: Vec<RetentionRow>,
}

impl RetentionTable {
    pub fn row(&self, group: &str) -> Option<&RetentionRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn n_users(&self) -> u64 {
        self.rows.iter().map(|r| r.n_users).sum()
    }
}

/// One user's first thread and whether they came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstThread {
    pub user_id: String,
    /// Index into the corpus's threads.
    pub thread: usize,
    pub anchor: i64,
    pub retained: bool,
}

/// Every authored post, per user, sorted by time.
struct ActivityIndex<'a> {
    by_user: HashMap<&'a str, Vec<(i64, usize)>>,
}

impl<'a> ActivityIndex<'a> {
    fn new(corpus: &'a Corpus) -> Self {
        let mut by_user: HashMap<&str, Vec<(i64, usize)>> = HashMap::new();
        for (i, t) in corpus.threads.iter().enumerate() {
            by_user.entry(t.seeker_id.as_str()).or_default().push((t.seed_timestamp, i));
            for r in &t.replies {
                by_user.entry(r.user_id.as_str()).or_default().push((r.timestamp, i));
            }
        }
        by_user.values_mut().for_each(|v| v.sort_unstable());
        ActivityIndex { by_user }
    }

    fn returned(&self, user: &str, first: usize, anchor: i64, horizon: Option<i64>) -> bool {
        let Some(events) = self.by_user.get(user) else { return false };
        let start = events.partition_point(|&(ts, _)| ts <= anchor);
        events[start..]
            .iter()
            .take_while(|&&(ts, _)| horizon.is_none_or(|h| ts - anchor <= h))
            .any(|&(_, t)| t != first)
    }
}

type FirstKey<'a> = (i64, &'a str, usize);

fn offer<'a>(first: &mut BTreeMap<&'a str, FirstKey<'a>>, user: &'a str, key: FirstKey<'a>) {
    match first.get(user) {
        Some(cur) if *cur <= key => {}
        _ => {
            first.insert(user, key);
        }
    }
}

/// First thread of every user in `role`, in user-id order.
pub fn first_threads(corpus: &Corpus, role: RetentionRole, horizon: Option<i64>) -> Vec<FirstThread> {
    let mut first: BTreeMap<&str, FirstKey> = BTreeMap::new();
    for (i, t) in corpus.threads.iter().enumerate() {
        let id = t.thread_id.as_str();
        match role {
            RetentionRole::Seeker => offer(&mut first, &t.seeker_id, (t.seed_timestamp, id, i)),
            RetentionRole::PeerSupporter => {
                // replies are in time order, so the first one per user wins
                for r in t.replies.iter().filter(|r| r.user_id != t.seeker_id) {
                    offer(&mut first, &r.user_id, (r.timestamp, id, i));
                }
            }
        }
    }
    let index = ActivityIndex::new(corpus);
    first
        .into_par_iter()
        .map(|(user, (anchor, _, thread))| FirstThread {
            user_id: user.to_string(),
            thread,
            anchor,
            retained: index.returned(user, thread, anchor, horizon),
        })
        .collect()
}

/// Group label of a first thread.
pub fn group_key(thread: &Thread, group_by: GroupBy, taxonomy: Option<&PatternTaxonomy>) -> Result<String> {
    if !group_by.needs_taxonomy() {
        return Ok(match group_by {
            GroupBy::Degree => classify_interaction_degree(thread).abbrev().to_string(),
            _ => count_peer_supporters(thread).1.to_string(),
        });
    }
    let taxonomy =
        taxonomy.ok_or_else(|| EngageError::Config(format!("grouping by {group_by} needs a taxonomy")))?;
    let label = taxonomy
        .pattern_of(&thread.thread_id, thread.is_isolated())
        .ok_or_else(|| EngageError::Mismatch(format!("thread {} is not covered by the taxonomy", thread.thread_id)))?;
    Ok(match group_by {
        GroupBy::Size => label.size().map_or("Isolated".to_string(), |s| format!("{s:?}")),
        GroupBy::Speed => label.speed().map_or("Isolated".to_string(), |s| format!("{s:?}")),
        _ => label.to_string(),
    })
}

/// Fraction retained per group, with a bootstrap interval.
pub fn summarize(groups: BTreeMap<String, Vec<bool>>, cfg: &BootstrapConfig) -> Result<Vec<RetentionRow>> {
    groups
        .into_par_iter()
        .map(|(group, outcomes)| {
            let n = outcomes.len() as u64;
            let k = outcomes.iter().filter(|x| **x).count() as u64;
            let fraction = k as f64 / n as f64;
            let (lo, hi) = bootstrap_ci(&outcomes, cfg)?;
            Ok(RetentionRow {
                group,
                n_users: n,
                n_retained: k,
                fraction,
                ci_low: lo.min(fraction),
                ci_high: hi.max(fraction),
            })
        })
        .collect()
}

pub fn retention(
    corpus: &Corpus,
    role: RetentionRole,
    group_by: GroupBy,
    taxonomy: Option<&PatternTaxonomy>,
    opts: &RetentionOptions,
) -> Result<RetentionTable> {
    opts.bootstrap.validate()?;
    if group_by.needs_taxonomy() && taxonomy.is_none() {
        return Err(EngageError::Config(format!("grouping by {group_by} needs a taxonomy")));
    }
    let mut groups: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for f in first_threads(corpus, role, opts.horizon_seconds) {
        let key = group_key(&corpus.threads[f.thread], group_by, taxonomy)?;
        groups.entry(key).or_default().push(f.retained);
    }
    Ok(RetentionTable { role, group_by, rows: summarize(groups, &opts.bootstrap)? })
}

pub fn seeker_retention(
    corpus: &Corpus,
    group_by: GroupBy,
    taxonomy: Option<&PatternTaxonomy>,
    opts: &RetentionOptions,
) -> Result<RetentionTable> {
    retention(corpus, RetentionRole::Seeker, group_by, taxonomy, opts)
}

pub fn peer_supporter_retention(
    corpus: &Corpus,
    group_by: GroupBy,
    taxonomy: Option<&PatternTaxonomy>,
    opts: &RetentionOptions,
) -> Result<RetentionTable> {
    retention(corpus, RetentionRole::PeerSupporter, group_by, taxonomy, opts)
}
