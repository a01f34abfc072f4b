//! Domain types for posts, threads and corpora, plus the two structural
//! preprocessing steps applied to every thread: merging consecutive posts
//! by one author and labeling each reply with its thread-local role.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EngageError, Result};
use crate::scaling::ScalingParams;

/// One raw post as it appears in an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub thread_id: String,
    pub post_id: String,
    pub user_id: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl PostRecord {
    pub fn new(
        thread_id: impl Into<String>,
        post_id: impl Into<String>,
        user_id: impl Into<String>,
        timestamp: i64,
    ) -> Self {
        PostRecord {
            thread_id: thread_id.into(),
            post_id: post_id.into(),
            user_id: user_id.into(),
            timestamp,
            body: None,
            score: None,
        }
    }

    /// Ordering key used everywhere posts are sorted: time first, post id as
    /// the tie-breaker.
    pub fn order_key(&self) -> (i64, &str) {
        (self.timestamp, self.post_id.as_str())
    }
}

/// Thread-local role of a reply author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserRole {
    FirstPeerSupporter,
    NewPeerSupporter,
    ExistingPeerSupporter,
    Seeker,
}

impl UserRole {
    pub const ALL: [UserRole; 4] = [
        UserRole::FirstPeerSupporter,
        UserRole::NewPeerSupporter,
        UserRole::ExistingPeerSupporter,
        UserRole::Seeker,
    ];
    pub const COUNT: usize = 4;

    /// Dense index into per-role count arrays.
    pub fn index(self) -> usize {
        match self {
            UserRole::FirstPeerSupporter => 0,
            UserRole::NewPeerSupporter => 1,
            UserRole::ExistingPeerSupporter => 2,
            UserRole::Seeker => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<UserRole> {
        UserRole::ALL.get(i).copied()
    }

    pub fn is_peer_supporter(self) -> bool {
        !matches!(self, UserRole::Seeker)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            UserRole::FirstPeerSupporter => "first_ps",
            UserRole::NewPeerSupporter => "new_ps",
            UserRole::ExistingPeerSupporter => "existing_ps",
            UserRole::Seeker => "seeker",
        }
    }
}

impl fmt::Display for UserRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UserRole::FirstPeerSupporter => "First Peer-Supporter",
            UserRole::NewPeerSupporter => "New Peer-Supporter",
            UserRole::ExistingPeerSupporter => "Existing Peer-Supporter",
            UserRole::Seeker => "Seeker",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub user_id: String,
    pub role: UserRole,
    pub timestamp: i64,
    /// Seconds since the previous (merged) post in the thread.
    pub delta_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_scaled: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    pub seeker_id: String,
    pub seed_timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_word_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_score: Option<f64>,
    pub replies: Vec<Reply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scaled: Option<f64>,
}

impl Thread {
    /// Builds a role-labeled thread from posts that are already sorted and
    /// merged. The first post is the seed.
    pub fn from_merged_posts(thread_id: impl Into<String>, posts: &[PostRecord]) -> Result<Thread> {
        let thread_id = thread_id.into();
        let (seed, rest) = posts
            .split_first()
            .ok_or_else(|| EngageError::Integrity(format!("thread {thread_id} has no posts")))?;
        let mut prev_ts = seed.timestamp;
        let replies = rest
            .iter()
            .map(|p| {
                let delta = (p.timestamp - prev_ts) as f64;
                prev_ts = p.timestamp;
                Reply {
                    user_id: p.user_id.clone(),
                    role: UserRole::NewPeerSupporter,
                    timestamp: p.timestamp,
                    delta_seconds: delta,
                    delta_scaled: None,
                    word_count: p.body.as_deref().map(word_count),
                    score: p.score,
                }
            })
            .collect();
        let mut thread = Thread {
            thread_id,
            seeker_id: seed.user_id.clone(),
            seed_timestamp: seed.timestamp,
            seed_word_count: seed.body.as_deref().map(word_count),
            seed_score: seed.score,
            replies,
            length_scaled: None,
        };
        assign_roles(&mut thread)?;
        Ok(thread)
    }

    /// Thread length k: the seed post plus all replies.
    pub fn length(&self) -> usize {
        1 + self.replies.len()
    }

    pub fn is_isolated(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn is_scaled(&self) -> bool {
        self.length_scaled.is_some() && self.replies.iter().all(|r| r.delta_scaled.is_some())
    }

    pub fn role_counts(&self) -> [u32; UserRole::COUNT] {
        let mut counts = [0u32; UserRole::COUNT];
        for r in &self.replies {
            counts[r.role.index()] += 1;
        }
        counts
    }

    /// Timestamp of the last post in the thread.
    pub fn last_timestamp(&self) -> i64 {
        self.replies.last().map_or(self.seed_timestamp, |r| r.timestamp)
    }

    /// Checks the structural invariants every assembled thread satisfies.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(EngageError::Integrity(format!("thread {}: {msg}", self.thread_id)));
        if self.thread_id.is_empty() || self.seeker_id.is_empty() {
            return fail("empty identifier".into());
        }
        let mut prev_user = self.seeker_id.as_str();
        let mut prev_ts = self.seed_timestamp;
        let mut seen: HashSet<&str> = HashSet::new();
        for (j, r) in self.replies.iter().enumerate() {
            if r.user_id == prev_user {
                return fail(format!("consecutive posts by {} at reply {}", r.user_id, j + 1));
            }
            if r.timestamp < prev_ts || r.delta_seconds < 0.0 {
                return fail(format!("reply {} out of order", j + 1));
            }
            let expected = expected_role(j, &r.user_id, &self.seeker_id, |u| seen.contains(u))
                .map_err(|e| EngageError::Integrity(format!("thread {}: {e}", self.thread_id)))?;
            if expected != r.role {
                return fail(format!("reply {} has role {:?}, expected {:?}", j + 1, r.role, expected));
            }
            if r.user_id != self.seeker_id {
                seen.insert(r.user_id.as_str());
            }
            prev_user = r.user_id.as_str();
            prev_ts = r.timestamp;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub threads: Vec<Thread>,
    pub scaling: Option<ScalingParams>,
}

impl Corpus {
    pub fn new(threads: Vec<Thread>) -> Corpus {
        Corpus { threads, scaling: None }
    }

    pub fn len(&self) -> usize {
        self.threads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threads.is_empty()
    }

    pub fn non_isolated(&self) -> impl Iterator<Item = &Thread> {
        self.threads.iter().filter(|t| !t.is_isolated())
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.threads.len());
        for t in &self.threads {
            if !seen.insert(t.thread_id.as_str()) {
                return Err(EngageError::Integrity(format!("duplicate thread id {}", t.thread_id)));
            }
        }
        Ok(())
    }
}

/// Whitespace token count of a post body.
pub fn word_count(body: &str) -> u32 {
    body.split_whitespace().count() as u32
}

/// Collapses runs of adjacent posts by the same user. Each merged block keeps
/// the first post's timestamp and post id; bodies are joined with a newline
/// and scores averaged over the posts that carry one.
pub fn merge_consecutive_posts(posts: &[PostRecord]) -> Vec<PostRecord> {
    let mut out: Vec<PostRecord> = Vec::with_capacity(posts.len());
    // (sum, n) of scores for the block currently at the end of `out`
    let mut score_acc = (0.0f64, 0usize);
    for p in posts {
        match out.last_mut() {
            Some(last) if last.user_id == p.user_id => {
                last.body = match (last.body.take(), p.body.as_ref()) {
                    (Some(a), Some(b)) => Some(format!("{a}\n{b}")),
                    (a, b) => a.or_else(|| b.cloned()),
                };
                if let Some(s) = p.score {
                    score_acc.0 += s;
                    score_acc.1 += 1;
                    last.score = Some(score_acc.0 / score_acc.1 as f64);
                }
            }
            _ => {
                score_acc = p.score.map_or((0.0, 0), |s| (s, 1));
                out.push(p.clone());
            }
        }
    }
    out
}

fn expected_role(
    reply_index: usize,
    user: &str,
    seeker: &str,
    is_earlier_peer: impl Fn(&str) -> bool,
) -> std::result::Result<UserRole, String> {
    if reply_index == 0 {
        if user == seeker {
            return Err("first reply authored by the seeker".into());
        }
        return Ok(UserRole::FirstPeerSupporter);
    }
    Ok(if user == seeker {
        UserRole::Seeker
    } else if is_earlier_peer(user) {
        UserRole::ExistingPeerSupporter
    } else {
        UserRole::NewPeerSupporter
    })
}

/// Labels every reply of `thread` with its role, derived from reply order and
/// authorship alone.
pub fn assign_roles(thread: &mut Thread) -> Result<()> {
    let mut seen: HashSet<String> = HashSet::new();
    let seeker = thread.seeker_id.as_str();
    for (j, reply) in thread.replies.iter_mut().enumerate() {
        reply.role = expected_role(j, &reply.user_id, seeker, |u| seen.contains(u))
            .map_err(|e| EngageError::Integrity(format!("thread {}: {e}", thread.thread_id)))?;
        if reply.user_id != seeker {
            seen.insert(reply.user_id.clone());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posts(spec: &[(&str, i64)]) -> Vec<PostRecord> {
        spec.iter()
            .enumerate()
            .map(|(i, (u, t))| PostRecord::new("t", format!("p{i}"), *u, *t))
            .collect()
    }

    fn users(p: &[PostRecord]) -> Vec<(&str, i64)> {
        p.iter().map(|p| (p.user_id.as_str(), p.timestamp)).collect()
    }

    fn thread_of(authors: &[&str]) -> Thread {
        let mut spec = vec![("S", 0)];
        spec.extend(authors.iter().enumerate().map(|(i, a)| (*a, 10 * (i as i64 + 1))));
        Thread::from_merged_posts("t", &posts(&spec)).unwrap()
    }

    #[test]
    fn merge_examples() {
        let m = merge_consecutive_posts(&posts(&[("A", 0), ("A", 5), ("B", 9)]));
        assert_eq!(users(&m), vec![("A", 0), ("B", 9)]);
        assert_eq!(m[0].post_id, "p0");

        let m = merge_consecutive_posts(&posts(&[("A", 0)]));
        assert_eq!(users(&m), vec![("A", 0)]);

        let m = merge_consecutive_posts(&posts(&[("A", 0), ("B", 3), ("B", 4), ("A", 8)]));
        assert_eq!(users(&m), vec![("A", 0), ("B", 3), ("A", 8)]);

        assert!(merge_consecutive_posts(&[]).is_empty());
    }

    #[test]
    fn merge_concatenates_bodies_and_averages_scores() {
        let mut p = posts(&[("A", 0), ("A", 1), ("A", 2)]);
        p[0].body = Some("hello".into());
        p[1].body = Some("there".into());
        p[0].score = Some(1.0);
        p[2].score = Some(0.0);
        let m = merge_consecutive_posts(&p);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].body.as_deref(), Some("hello\nthere"));
        assert_eq!(m[0].score, Some(0.5));
    }

    #[test]
    fn role_examples() {
        use UserRole::*;
        let roles = |t: &Thread| t.replies.iter().map(|r| r.role).collect::<Vec<_>>();
        assert_eq!(roles(&thread_of(&["A"])), vec![FirstPeerSupporter]);
        assert_eq!(
            roles(&thread_of(&["A", "S", "A"])),
            vec![FirstPeerSupporter, Seeker, ExistingPeerSupporter]
        );
        assert_eq!(
            roles(&thread_of(&["A", "B", "S", "B"])),
            vec![FirstPeerSupporter, NewPeerSupporter, Seeker, ExistingPeerSupporter]
        );
    }

    #[test]
    fn seeker_as_first_reply_is_an_integrity_error() {
        let p = posts(&[("S", 0), ("X", 1)]);
        let mut t = Thread::from_merged_posts("t", &p).unwrap();
        t.replies[0].user_id = "S".into();
        assert!(matches!(assign_roles(&mut t), Err(EngageError::Integrity(_))));
    }

    #[test]
    fn deltas_and_length() {
        let t = thread_of(&["A", "S", "A"]);
        assert_eq!(t.length(), 4);
        let d: Vec<f64> = t.replies.iter().map(|r| r.delta_seconds).collect();
        assert_eq!(d, vec![10.0, 10.0, 10.0]);
        t.validate().unwrap();
    }

    #[test]
    fn word_counts_flow_into_replies() {
        let mut p = posts(&[("S", 0), ("A", 4)]);
        p[0].body = Some("I need  help".into());
        p[1].body = Some("here for you".into());
        let t = Thread::from_merged_posts("t", &p).unwrap();
        assert_eq!(t.seed_word_count, Some(3));
        assert_eq!(t.replies[0].word_count, Some(3));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn author_seq() -> impl Strategy<Value = Vec<usize>> {
            prop::collection::vec(0usize..4, 0..12)
        }

        fn to_posts(seq: &[usize]) -> Vec<PostRecord> {
            seq.iter()
                .enumerate()
                .map(|(i, u)| PostRecord::new("t", format!("p{i:03}"), format!("u{u}"), i as i64))
                .collect()
        }

        proptest! {
            #[test]
            fn merge_is_idempotent(seq in author_seq()) {
                let once = merge_consecutive_posts(&to_posts(&seq));
                let twice = merge_consecutive_posts(&once);
                prop_assert_eq!(&once, &twice);
                for w in once.windows(2) {
                    prop_assert_ne!(&w[0].user_id, &w[1].user_id);
                }
            }

            #[test]
            fn roles_partition_replies(seq in author_seq()) {
                let merged = merge_consecutive_posts(&to_posts(&seq));
                if merged.is_empty() {
                    return Ok(());
                }
                let t = Thread::from_merged_posts("t", &merged).unwrap();
                t.validate().unwrap();
                let firsts = t.replies.iter().filter(|r| r.role == UserRole::FirstPeerSupporter).count();
                prop_assert_eq!(firsts == 1, t.length() >= 2);
                prop_assert!(firsts <= 1);
                let mut seen = HashSet::new();
                for r in &t.replies {
                    let first_time = seen.insert(r.user_id.clone());
                    if first_time {
                        prop_assert!(matches!(r.role, UserRole::FirstPeerSupporter | UserRole::NewPeerSupporter | UserRole::Seeker));
                    } else {
                        prop_assert!(matches!(r.role, UserRole::ExistingPeerSupporter | UserRole::Seeker));
                    }
                }
            }
        }
    }
}
