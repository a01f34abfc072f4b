//! The four thread-level engagement indicators: length, number of
//! peer-supporters, time between responses and degree of interaction.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Thread, UserRole};
use crate::error::Result;
use crate::format::{Provenance, TABLE_FORMAT};

/// Degree of interaction between the seeker and peer-supporters, ordered by
/// engagement depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionDegree {
    Isolated,
    SingleInteraction,
    RepeatedSeekerInteraction,
    MutualDiscourse,
}

impl InteractionDegree {
    pub const ALL: [InteractionDegree; 4] = [
        InteractionDegree::Isolated,
        InteractionDegree::SingleInteraction,
        InteractionDegree::RepeatedSeekerInteraction,
        InteractionDegree::MutualDiscourse,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            InteractionDegree::Isolated => "Isolated",
            InteractionDegree::SingleInteraction => "SI",
            InteractionDegree::RepeatedSeekerInteraction => "RSI",
            InteractionDegree::MutualDiscourse => "MD",
        }
    }
}

impl fmt::Display for InteractionDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InteractionDegree::Isolated => "Isolated",
            InteractionDegree::SingleInteraction => "Single Interaction",
            InteractionDegree::RepeatedSeekerInteraction => "Repeated Seeker Interaction",
            InteractionDegree::MutualDiscourse => "Mutual Discourse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyClass {
    Isolated,
    TwoParty,
    MultiParty,
}

impl PartyClass {
    pub const ALL: [PartyClass; 3] = [PartyClass::Isolated, PartyClass::TwoParty, PartyClass::MultiParty];
}

impl fmt::Display for PartyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyClass::Isolated => "Isolated",
            PartyClass::TwoParty => "Two-Party",
            PartyClass::MultiParty => "Multi-Party",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub thread_id: String,
    pub length: usize,
    pub n_peer_supporters: usize,
    pub party: PartyClass,
    pub deltas: Vec<f64>,
    pub degree: InteractionDegree,
}

impl IndicatorRecord {
    pub fn median_delta(&self) -> Option<f64> {
        median(&self.deltas)
    }
}

pub(crate) fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Distinct non-seeker reply authors and the party class they imply.
pub fn count_peer_supporters(thread: &Thread) -> (usize, PartyClass) {
    let peers: HashSet<&str> = thread
        .replies
        .iter()
        .filter(|r| r.user_id != thread.seeker_id)
        .map(|r| r.user_id.as_str())
        .collect();
    let class = match peers.len() {
        0 => PartyClass::Isolated,
        1 => PartyClass::TwoParty,
        _ => PartyClass::MultiParty,
    };
    (peers.len(), class)
}

/// Mutual discourse needs a peer who posted before some seeker reply to post
/// again after it. A seeker reply makes every peer seen so far eligible.
pub fn classify_interaction_degree(thread: &Thread) -> InteractionDegree {
    if thread.replies.is_empty() {
        return InteractionDegree::Isolated;
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let mut eligible: HashSet<&str> = HashSet::new();
    let mut seeker_replied = false;
    for r in &thread.replies {
        if r.role == UserRole::Seeker {
            seeker_replied = true;
            eligible.extend(seen.iter().copied());
        } else if eligible.contains(r.user_id.as_str()) {
            return InteractionDegree::MutualDiscourse;
        } else {
            seen.insert(r.user_id.as_str());
        }
    }
    if seeker_replied {
        InteractionDegree::RepeatedSeekerInteraction
    } else {
        InteractionDegree::SingleInteraction
    }
}

pub fn indicator_record(thread: &Thread) -> IndicatorRecord {
    let (n_peer_supporters, party) = count_peer_supporters(thread);
    IndicatorRecord {
        thread_id: thread.thread_id.clone(),
        length: thread.length(),
        n_peer_supporters,
        party,
        deltas: thread.replies.iter().map(|r| r.delta_seconds).collect(),
        degree: classify_interaction_degree(thread),
    }
}

/// CSV with one row per thread:
/// `thread_id,k,n_ps,party,degree,median_delta_s`.
pub fn write_indicators_csv<W: Write>(
    records: &[IndicatorRecord],
    mut writer: W,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["thread_id", "k", "n_ps", "party", "degree", "median_delta_s"])?;
    for r in records {
        w.write_record([
            r.thread_id.clone(),
            r.length.to_string(),
            r.n_peer_supporters.to_string(),
            r.party.to_string(),
            r.degree.abbrev().to_string(),
            r.median_delta().map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
