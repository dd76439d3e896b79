use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no perfect matching found for trial {trial} after {restarts} restarts")]
    MatchingFailure { trial: u32, restarts: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: byte offset {offset}: {message}")]
    LogLoad {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: schema version {found} at byte offset {offset}, expected {expected}")]
    SchemaVersion {
        path: PathBuf,
        offset: u64,
        found: u32,
        expected: u32,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
