//! Preference-dataset construction and feature-based evaluation for
//! emotion-grounded dialogue corpora.
//!
//! The crate covers the data side of aligning dialogue models for
//! empathetic responses:
//!
//! - [`corpus`]: ingest, filter and index the emotion-labeled dialogue CSV,
//!   with a canonical JSON-lines form.
//! - [`preference`]: build per-epoch (context, chosen, rejected) training
//!   files by drawing rejected completions from polar-opposite emotion
//!   groups, deterministically under a seed.
//! - [`lexicons`]: NRC-style VAD and emotion-intensity loaders plus the
//!   corpus-derived NIDF specificity table.
//! - [`metrics`]: per-example and aggregate feature metrics (specificity,
//!   word choice, length), response-trie diversity, and aggregation of
//!   externally produced model-based scores.
//! - [`stats`]: permutation, Welch, paired-t/Cohen's d and McNemar tests,
//!   plus human-evaluation aggregation.
//! - [`report`]: the evaluation pipeline, report schema, verification and
//!   renderers.

pub mod corpus;
pub mod error;
pub mod lexicons;
pub mod metrics;
pub mod preference;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
