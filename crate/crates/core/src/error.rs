use std::io;

use thiserror::Error;

/// Errors raised across the training engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape, dimension, or configuration value is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called in the wrong lifecycle state.
    #[error("usage error: {0}")]
    Usage(String),
    /// A broken internal invariant (stale cache, double freeze, ...).
    #[error("internal error: {0}")]
    Internal(String),
    /// The replay buffer holds fewer transitions than requested.
    #[error("replay buffer not ready: {occupancy} transitions stored, {requested} requested")]
    NotReady { occupancy: usize, requested: usize },
    /// A NaN or infinite value reached a place that requires finite numbers.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
