//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by the numerical kernel, data pipeline, training loop,
/// defenses and experiment harness.
#[derive(Debug, Error)]
pub enum FpdError {
    #[error("vector must have at least one entry")]
    EmptyVector,

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate vector: zero norm")]
    DegenerateVector,

    #[error("degenerate matrix: all rows are zero")]
    DegenerateMatrix,

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("nothing to aggregate")]
    EmptyAggregation,

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("training error: {0}")]
    Train(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("attack error: {0}")]
    Attack(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FpdError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FpdError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FpdError>;
