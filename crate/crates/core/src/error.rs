use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    /// Caller broke an API precondition (wrong dimension, finished episode, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A supply series ran out before an execution finished.
    #[error("series exhausted with {remaining} left after {slots} slots")]
    Unfinished { remaining: f64, slots: u64 },

    #[error("cloud link unreachable at slot {slot} (rate 0)")]
    UnreachableCloud { slot: u64 },

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("missing checkpoint for policy {policy}: {path}")]
    MissingCheckpoint { policy: String, path: PathBuf },

    #[error("csv schema mismatch in column `{column}`: {msg}")]
    Schema { column: String, msg: String },

    #[error("worker failed: {0}")]
    Worker(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
