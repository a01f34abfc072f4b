//! Thread-level engagement modeling for online support conversations.
//!
//! The pipeline runs: raw posts ([`ingest`]) → role-labeled, scaled threads
//! ([`corpus`], [`scaling`]) → engagement indicators ([`indicators`]) → a
//! Beta/Dirichlet mixture over threads fitted by collapsed Gibbs sampling
//! ([`mixture`]) → named engagement patterns ([`taxonomy`]) → retention and
//! interaction analyses ([`analysis`]). [`generator`] samples synthetic
//! corpora from the same generative process for recovery testing.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod format;
pub mod generator;
pub mod indicators;
pub mod ingest;
pub mod mixture;
pub mod scaling;
pub mod taxonomy;

pub use corpus::{Corpus, PostRecord, Reply, Thread, UserRole};
pub use error::{EngageError, Result};
pub use indicators::{InteractionDegree, PartyClass};
pub use scaling::{ScalingConfig, ScalingParams};
