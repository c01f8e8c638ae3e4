//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown environment `{0}` (expected point_reach or hill_climb)")]
    UnknownEnv(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch of {size} transitions is too small to split")]
    SplitTooSmall { size: usize },

    #[error(
        "envelope value {value} at index {index} is not strictly positive; \
         the ratio rule is undefined there, use the difference rule"
    )]
    NonPositiveEnvelope { index: usize, value: f64 },

    #[error("rollout fault: {0}")]
    Rollout(String),

    #[error("training fault at epoch {epoch}, minibatch {minibatch}: {message}")]
    Training {
        epoch: usize,
        minibatch: usize,
        message: String,
    },

    #[error("bad magic bytes (expected {expected})")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {got} (expected {expected})")]
    Version { expected: u32, got: u32 },

    #[error("file truncated while reading {context}")]
    Truncated { context: &'static str },

    #[error("dimension inconsistency in file: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON encoding: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data format, 4 training/runtime fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownEnv(_) | Error::SplitTooSmall { .. } => 2,
            Error::BadMagic { .. }
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::DimensionMismatch(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
            _ => 4,
        }
    }
}
