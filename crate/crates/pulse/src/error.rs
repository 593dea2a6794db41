//! Crate-wide error type.

use std::fmt;

/// Errors surfaced at the public boundaries: ingestion, configuration,
/// checkpoints, and training. Shape misuse inside the numeric kernels is a
/// programming error and panics instead.
#[derive(Debug)]
pub enum PulseError {
    /// Configuration file or CLI parameter problems.
    Config(String),
    /// Data ingestion or dataset shape problems.
    Data(String),
    /// Checkpoint encoding/decoding problems.
    Checkpoint(String),
    /// Non-finite values or other contract violations during training.
    Train(String),
    Io(std::io::Error),
}

impl fmt::Display for PulseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PulseError::Config(m) => write!(f, "config error: {m}"),
            PulseError::Data(m) => write!(f, "data error: {m}"),
            PulseError::Checkpoint(m) => write!(f, "checkpoint error: {m}"),
            PulseError::Train(m) => write!(f, "training error: {m}"),
            PulseError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for PulseError {}

impl From<std::io::Error> for PulseError {
    fn from(e: std::io::Error) -> Self {
        PulseError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, PulseError>;
