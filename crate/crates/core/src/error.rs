//! Error type shared by every stage of the pipeline.

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngageError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("checksum failure: {0}")]
    Checksum(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("degenerate range: {0}")]
    DegenerateRange(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mismatched identifiers: {0}")]
    Mismatch(String),

    #[error("empty corpus")]
    EmptyCorpus,
}

impl EngageError {
    /// Stable machine-readable kind, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            EngageError::Io(_) => "io",
            EngageError::Json(_) => "json",
            EngageError::Csv(_) => "csv",
            EngageError::Format(_) => "format",
            EngageError::VersionMismatch { .. } => "version_mismatch",
            EngageError::Checksum(_) => "checksum",
            EngageError::Integrity(_) => "integrity",
            EngageError::DegenerateRange(_) => "degenerate_range",
            EngageError::Domain(_) => "domain",
            EngageError::State(_) => "state",
            EngageError::Config(_) => "config",
            EngageError::InsufficientData(_) => "insufficient_data",
            EngageError::Mismatch(_) => "mismatch",
            EngageError::EmptyCorpus => "empty_corpus",
        }
    }
}

pub type Result<T> = std::result::Result<T, EngageError>;
