use thiserror::Error;

/// Errors raised by the clustering engine.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto a small set of exit codes: contract/data problems versus capacity
/// limits.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Blocks overlap, miss an index, or are empty.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// An exact enumeration or search was asked to go beyond its guard.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Input that makes a formula undefined (zero windows, zero variance, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Not enough observations before the requested time index.
    #[error("insufficient history: need at least {needed} steps, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed text input.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
