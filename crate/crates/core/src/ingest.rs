//! Reading raw post files, assembling them into threads and persisting
//! corpus snapshots.
//!
//! Input is newline-delimited JSON with one post per line:
//!
//! ```text
//! {"thread_id":"t1","post_id":"p1","user_id":"u1","timestamp":100,"body":"...","score":0.2}
//! ```
//!
//! Snapshots are JSON lines as well: a header carrying the format version,
//! provenance and scaling constants, one thread per line, and a trailer with
//! the thread count and a SHA-256 over everything before it.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{merge_consecutive_posts, Corpus, PostRecord, Thread};
use crate::error::{EngageError, Result};
use crate::format::{check_format, HashingWriter, Provenance, CORPUS_FORMAT};
use crate::scaling::ScalingParams;

/// User ids treated as deleted accounts.
const DELETED_USERS: [&str; 2] = ["", "[deleted]"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub reason: String,
    /// Fatal anomalies drop the whole thread.
    pub fatal: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_lines: usize,
    pub n_malformed_lines: usize,
    pub n_posts: usize,
    pub n_threads: usize,
    /// Posts absorbed into a preceding post by the same author.
    pub n_merged: usize,
    /// Threads dropped for a fatal anomaly.
    pub n_dropped: usize,
    pub n_dropped_posts: usize,
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedPosts {
    pub posts: Vec<PostRecord>,
    pub n_lines: usize,
    /// (1-based line number, reason)
    pub malformed: Vec<(usize, String)>,
}

fn check_record(p: &PostRecord) -> std::result::Result<(), String> {
    if p.thread_id.is_empty() {
        return Err("empty thread_id".into());
    }
    if p.post_id.is_empty() {
        return Err("empty post_id".into());
    }
    if p.timestamp < 0 {
        return Err(format!("negative timestamp {}", p.timestamp));
    }
    Ok(())
}

/// Parses a JSONL post stream. Malformed lines are skipped and reported;
/// if more than half of the non-blank lines are malformed the whole stream is
/// rejected.
pub fn parse_posts<R: BufRead>(reader: R) -> Result<ParsedPosts> {
    let mut out = ParsedPosts::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.n_lines += 1;
        match serde_json::from_str::<PostRecord>(trimmed) {
            Ok(p) => match check_record(&p) {
                Ok(()) => out.posts.push(p),
                Err(reason) => out.malformed.push((i + 1, reason)),
            },
            Err(e) => out.malformed.push((i + 1, e.to_string())),
        }
    }
    if out.malformed.len() * 2 > out.n_lines {
        return Err(EngageError::Format(format!(
            "{} of {} lines are malformed (first at line {})",
            out.malformed.len(),
            out.n_lines,
            out.malformed[0].0
        )));
    }
    for (line, reason) in &out.malformed {
        debug!("skipping malformed line {line}: {reason}");
    }
    Ok(out)
}

pub fn parse_posts_file(path: impl AsRef<Path>) -> Result<ParsedPosts> {
    let f = File::open(path.as_ref())?;
    parse_posts(BufReader::new(f))
}

enum Assembled {
    Kept { thread: Thread, merged: usize },
    Dropped { anomaly: Anomaly, posts: usize },
}

fn assemble_one(thread_id: String, mut posts: Vec<PostRecord>) -> Assembled {
    let n = posts.len();
    let drop = |reason: String| Assembled::Dropped {
        anomaly: Anomaly { thread_id: Some(thread_id.clone()), line: None, reason, fatal: true },
        posts: n,
    };
    posts.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut ids = HashSet::with_capacity(n);
    for p in &posts {
        if !ids.insert(p.post_id.as_str()) {
            return drop(format!("duplicate post_id {}", p.post_id));
        }
        if DELETED_USERS.contains(&p.user_id.as_str()) {
            return drop(format!("post {} has a deleted or empty user_id", p.post_id));
        }
    }
    let merged = merge_consecutive_posts(&posts);
    match Thread::from_merged_posts(thread_id.clone(), &merged) {
        Ok(thread) => Assembled::Kept { merged: n - merged.len(), thread },
        Err(e) => drop(e.to_string()),
    }
}

/// Groups posts into threads, orders each thread by `(timestamp, post_id)`,
/// merges consecutive same-author posts and labels roles. The result is
/// independent of the input order; threads come out sorted by id.
pub fn assemble_threads(posts: Vec<PostRecord>) -> (Corpus, ValidationReport) {
    let n_posts = posts.len();
    let mut groups: BTreeMap<String, Vec<PostRecord>> = BTreeMap::new();
    for p in posts {
        groups.entry(p.thread_id.clone()).or_default().push(p);
    }
    let assembled: Vec<Assembled> = groups
        .into_par_iter()
        .map(|(id, posts)| assemble_one(id, posts))
        .collect();

    let mut report = ValidationReport { n_posts, ..ValidationReport::default() };
    let mut threads = Vec::with_capacity(assembled.len());
    for a in assembled {
        match a {
            Assembled::Kept { thread, merged } => {
                report.n_merged += merged;
                threads.push(thread);
            }
            Assembled::Dropped { anomaly, posts } => {
                warn!("dropping thread {:?}: {}", anomaly.thread_id, anomaly.reason);
                report.n_dropped += 1;
                report.n_dropped_posts += posts;
                report.anomalies.push(anomaly);
            }
        }
    }
    report.n_threads = threads.len();
    (Corpus::new(threads), report)
}

/// Parses and assembles in one step, folding parse problems into the report.
pub fn ingest<R: BufRead>(reader: R) -> Result<(Corpus, ValidationReport)> {
    let parsed = parse_posts(reader)?;
    let (corpus, mut report) = assemble_threads(parsed.posts);
    report.n_lines = parsed.n_lines;
    report.n_malformed_lines = parsed.malformed.len();
    let mut anomalies: Vec<Anomaly> = parsed
        .malformed
        .into_iter()
        .map(|(line, reason)| Anomaly { thread_id: None, line: Some(line), reason, fatal: false })
        .collect();
    anomalies.append(&mut report.anomalies);
    report.anomalies = anomalies;
    Ok((corpus, report))
}

/// Flattens threads back into posts, one per merged post, with post ids
/// `<thread>-<zero-padded index>`. Bodies are stand-ins with the recorded
/// word count.
pub fn corpus_to_posts(corpus: &Corpus) -> Vec<PostRecord> {
    let body = |n: Option<u32>| n.map(|n| vec!["w"; n as usize].join(" "));
    let mut out = Vec::new();
    for t in &corpus.threads {
        out.push(PostRecord {
            body: body(t.seed_word_count),
            score: t.seed_score,
            ..PostRecord::new(&t.thread_id, format!("{}-00000", t.thread_id), &t.seeker_id, t.seed_timestamp)
        });
        for (i, r) in t.replies.iter().enumerate() {
            out.push(PostRecord {
                body: body(r.word_count),
                score: r.score,
                ..PostRecord::new(&t.thread_id, format!("{}-{:05}", t.thread_id, i + 1), &r.user_id, r.timestamp)
            });
        }
    }
    out
}

/// Writes posts in the JSONL input format.
pub fn write_posts_to<W: Write>(posts: &[PostRecord], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for p in posts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub provenance: Provenance,
    pub n_threads: usize,
    pub scaling: Option<ScalingParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotTrailer {
    n_threads: usize,
    sha256: String,
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_corpus_with(corpus, path, &Provenance::default())
}

pub fn write_corpus_with(corpus: &Corpus, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
    let f = File::create(path.as_ref())?;
    write_corpus_to(corpus, BufWriter::new(f), provenance)
}

pub fn write_corpus_to<W: Write>(corpus: &Corpus, writer: W, provenance: &Provenance) -> Result<()> {
    let header = SnapshotHeader {
        format: CORPUS_FORMAT.to_string(),
        provenance: provenance.clone(),
        n_threads: corpus.threads.len(),
        scaling: corpus.scaling,
    };
    let mut w = HashingWriter::new(writer);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &corpus.threads {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    let (mut inner, sha256) = w.finish();
    serde_json::to_writer(&mut inner, &SnapshotTrailer { n_threads: corpus.threads.len(), sha256 })?;
    inner.write_all(b"\n")?;
    inner.flush()?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus_with_header(path).map(|(c, _)| c)
}

pub fn read_corpus_with_header(path: impl AsRef<Path>) -> Result<(Corpus, SnapshotHeader)> {
    let f = File::open(path.as_ref())?;
    read_corpus_from(BufReader::new(f))
}

pub fn read_corpus_from<R: BufRead>(reader: R) -> Result<(Corpus, SnapshotHeader)> {
    let mut lines = reader.lines();
    let mut hasher = Sha256::new();
    let header_line = lines
        .next()
        .transpose()?
        .ok_or_else(|| EngageError::Checksum("snapshot is empty".into()))?;
    let header_value: serde_json::Value = serde_json::from_str(&header_line)
        .map_err(|e| EngageError::Format(format!("bad snapshot header: {e}")))?;
    let found = header_value.get("format").and_then(|v| v.as_str()).unwrap_or("<missing>");
    check_format(CORPUS_FORMAT, found)?;
    let header: SnapshotHeader = serde_json::from_value(header_value)?;
    hasher.update(header_line.as_bytes());
    hasher.update(b"\n");

    let mut threads = Vec::with_capacity(header.n_threads);
    let mut trailer: Option<SnapshotTrailer> = None;
    for line in lines {
        let line = line?;
        if trailer.is_some() {
            if line.trim().is_empty() {
                continue;
            }
            return Err(EngageError::Format("content after snapshot trailer".into()));
        }
        if threads.len() == header.n_threads {
            trailer = Some(
                serde_json::from_str(&line)
                    .map_err(|e| EngageError::Checksum(format!("unreadable trailer: {e}")))?,
            );
            continue;
        }
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        let t: Thread = serde_json::from_str(&line)
            .map_err(|e| EngageError::Checksum(format!("corrupt thread record: {e}")))?;
        threads.push(t);
    }
    let trailer = trailer.ok_or_else(|| {
        EngageError::Checksum(format!(
            "snapshot truncated: {} of {} threads and no trailer",
            threads.len(),
            header.n_threads
        ))
    })?;
    let digest = hex::encode(hasher.finalize());
    if trailer.sha256 != digest || trailer.n_threads != threads.len() {
        return Err(EngageError::Checksum(format!("expected {}, computed {digest}", trailer.sha256)));
    }
    let corpus = Corpus { threads, scaling: header.scaling };
    corpus.check_unique_ids()?;
    Ok((corpus, header))
}
