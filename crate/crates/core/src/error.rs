//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Split;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Fatal format error in an input file (bad header, unparseable line).
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("json error ({context}): {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown emotion label: {0:?}")]
    UnknownEmotion(String),

    #[error("unknown split: {0:?} (expected train, valid or test)")]
    UnknownSplit(String),

    #[error("split {0} not present in corpus")]
    MissingSplit(Split),

    #[error("no completions labeled {opposite} in split {split} (needed as opposite of {label})")]
    EmptyOppositeGroup {
        label: String,
        opposite: String,
        split: Split,
    },

    #[error("invalid opposite table: {0}")]
    InvalidTable(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("paired inputs have different lengths: {n_a} vs {n_b}")]
    LengthMismatch { n_a: usize, n_b: usize },

    /// Two score files disagree on their id sets.
    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("missing annotation cells: {0}")]
    MissingCells(String),

    #[error("invalid input for statistical test: {0}")]
    Stats(String),

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
