//! Format identifiers and provenance stamped into every file this crate writes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngageError, Result};

pub const TOOL_VERSION: &str = concat!("engage ", env!("CARGO_PKG_VERSION"));

pub const CORPUS_FORMAT: &str = "engage-corpus/1";
pub const MODEL_FORMAT: &str = "engage-model/1";
pub const SPEC_FORMAT: &str = "engage-spec/1";
pub const TAXONOMY_FORMAT: &str = "engage-taxonomy/1";
pub const TABLE_FORMAT: &str = "engage-table/1";

/// Where an output came from: the tool that wrote it, the seed in effect and
/// checksums of the files it was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance { tool_version: TOOL_VERSION.to_string(), seed: None, inputs: BTreeMap::new() }
    }
}

impl Provenance {
    pub fn with_seed(seed: u64) -> Self {
        Provenance { seed: Some(seed), ..Provenance::default() }
    }

    pub fn input(mut self, name: impl Into<String>, sha256: impl Into<String>) -> Self {
        self.inputs.insert(name.into(), sha256.into());
        self
    }

    /// One-line `# key=value` header for CSV outputs.
    pub fn csv_comment(&self, format: &str) -> String {
        let mut s = format!("# format={format} tool={}", self.tool_version.replace(' ', "/"));
        if let Some(seed) = self.seed {
            s.push_str(&format!(" seed={seed}"));
        }
        for (k, v) in &self.inputs {
            s.push_str(&format!(" input:{k}={v}"));
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let mut f = File::open(path.as_ref())?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub(crate) fn check_format(expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(EngageError::VersionMismatch { expected: expected.to_string(), found: found.to_string() })
    }
}

/// Hashing writer used for streaming checksums.
pub(crate) struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: io::Write> HashingWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        HashingWriter { inner, hasher: Sha256::new() }
    }

    pub(crate) fn finish(self) -> (W, String) {
        (self.inner, hex::encode(self.hasher.finalize()))
    }
}

impl<W: io::Write> io::Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
