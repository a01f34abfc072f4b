#![allow(dead_code)]

use engage_core::corpus::{Corpus, PostRecord, Thread};
use engage_core::scaling::{scale_corpus, ScalingConfig};

/// Builds a thread from `(author, seconds after the seed)` pairs; the first
/// pair is the seed.
pub fn thread(id: &str, start: i64, posts: &[(&str, i64)]) -> Thread {
    let records: Vec<PostRecord> = posts
        .iter()
        .enumerate()
        .map(|(i, (user, dt))| PostRecord::new(id, format!("{id}-{i}"), *user, start + dt))
        .collect();
    Thread::from_merged_posts(id, &records).unwrap()
}

/// Thread whose authors are given as a string, one character per post,
/// spaced `gap` seconds apart.
pub fn seq_thread(id: &str, start: i64, authors: &str, gap: i64) -> Thread {
    let names: Vec<String> = authors.chars().map(|c| c.to_string()).collect();
    let posts: Vec<(&str, i64)> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as i64 * gap)).collect();
    thread(id, start, &posts)
}

pub fn scaled(threads: Vec<Thread>) -> Corpus {
    scale_corpus(Corpus::new(threads), &ScalingConfig::default()).unwrap()
}

/// Ten small threads with varied lengths, delays and role mixes.
pub fn toy_corpus_10() -> Corpus {
    scaled(vec![
        thread("t00", 0, &[("s0", 0), ("a", 30)]),
        thread("t01", 100, &[("s1", 0), ("a", 600), ("b", 1200)]),
        thread("t02", 200, &[("s2", 0), ("b", 20), ("s2", 50), ("b", 90)]),
        thread("t03", 300, &[("s3", 0), ("c", 4000), ("d", 9000), ("e", 20000), ("f", 26000)]),
        thread("t04", 400, &[("s4", 0), ("a", 45), ("s4", 60), ("a", 100), ("s4", 130), ("a", 170)]),
        thread("t05", 500, &[("s5", 0), ("c", 7000)]),
        thread("t06", 600, &[("s6", 0), ("d", 15), ("e", 40), ("s6", 60)]),
        thread("t07", 700, &[("s7", 0), ("f", 3000), ("s7", 3300), ("g", 9000), ("f", 12000)]),
        thread("t08", 800, &[("s8", 0), ("g", 50), ("h", 300), ("i", 700), ("g", 800), ("s8", 1000), ("h", 1300)]),
        thread("t09", 900, &[("s9", 0), ("h", 200), ("s9", 210)]),
    ])
}

pub fn toy_corpus_3() -> Corpus {
    scaled(vec![
        thread("u0", 0, &[("s0", 0), ("a", 30), ("s0", 90)]),
        thread("u1", 100, &[("s1", 0), ("b", 5000)]),
        thread("u2", 200, &[("s2", 0), ("c", 60), ("d", 300), ("c", 500), ("s2", 7000)]),
    ])
}

/// Scales with fixed constants, for corpora whose own ranges are degenerate.
pub fn scaled_fixed(threads: Vec<Thread>) -> Corpus {
    let params = engage_core::ScalingParams {
        len_min: 1,
        len_max: 50,
        delta_min: 0.0,
        delta_max: 86_400.0,
        delta_cap: 86_400.0,
        epsilon: 1e-6,
        log_deltas: false,
    };
    engage_core::scaling::apply_scaling(Corpus::new(threads), &params).unwrap()
}

/// Every reply-author string of length 0 to `max_len` over `alphabet`.
pub fn all_sequences(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Thread seeded by `S` with the given reply authors, after merging
/// consecutive posts by the same author.
pub fn thread_from_replies(id: &str, replies: &str) -> Thread {
    let mut posts = vec![PostRecord::new(id, "p0", "S", 0)];
    for (i, c) in replies.chars().enumerate() {
        posts.push(PostRecord::new(id, format!("p{}", i + 1), c.to_string(), 60 * (i as i64 + 1)));
    }
    let merged = engage_core::corpus::merge_consecutive_posts(&posts);
    Thread::from_merged_posts(id, &merged).unwrap()
}

/// Degree of interaction by direct search over the merged author sequence:
/// mutual discourse iff some peer posts, then the seeker, then that peer.
pub fn degree_oracle(replies: &[char]) -> engage_core::InteractionDegree {
    use engage_core::InteractionDegree::*;
    let mut merged: Vec<char> = Vec::new();
    let mut last = 'S';
    for &c in replies {
        if c != last {
            merged.push(c);
            last = c;
        }
    }
    if merged.is_empty() {
        return Isolated;
    }
    let n = merged.len();
    for i in 0..n {
        for j in i + 1..n {
            for m in j + 1..n {
                if merged[i] != 'S' && merged[j] == 'S' && merged[m] == merged[i] {
                    return MutualDiscourse;
                }
            }
        }
    }
    if merged.contains(&'S') {
        RepeatedSeekerInteraction
    } else {
        SingleInteraction
    }
}

pub fn party_oracle(replies: &[char]) -> engage_core::PartyClass {
    let mut peers: Vec<char> = replies.iter().copied().filter(|c| *c != 'S').collect();
    peers.sort_unstable();
    peers.dedup();
    match peers.len() {
        0 => engage_core::PartyClass::Isolated,
        1 => engage_core::PartyClass::TwoParty,
        _ => engage_core::PartyClass::MultiParty,
    }
}

/// Six users with known return behavior; timestamps are absolute.
pub fn six_user_corpus() -> Corpus {
    Corpus::new(vec![
        thread("t1", 0, &[("S1", 100), ("P1", 110), ("S1", 120), ("P1", 130)]),
        thread("t2", 0, &[("S2", 200), ("P2", 210)]),
        thread("t3", 0, &[("S3", 300), ("P1", 305), ("P3", 320)]),
        thread("t4", 0, &[("S1", 400), ("P3", 410), ("S2", 420)]),
        thread("t5", 0, &[("P2", 500)]),
        thread("t6", 0, &[("P3", 50)]),
    ])
}
