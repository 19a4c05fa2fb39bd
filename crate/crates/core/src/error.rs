//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by dataset handling, schedules and bound computations.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input.
    #[error("input error: {0}")]
    Input(String),
    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An exact enumeration would exceed the configured state cap.
    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateSpace { states: u128, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
