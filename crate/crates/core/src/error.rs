use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Structural mismatch: dimensions, sizes, spans, missing fields.
    #[error("schema error: {0}")]
    Schema(String),

    /// Bad magic, unsupported version, malformed header.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite values in numeric payloads.
    #[error("data error: {0}")]
    Data(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("training set contaminated: {0}")]
    Contamination(String),

    #[error("ann recall check failed: measured recall@1 {measured:.4} < target {target:.4}")]
    Recall { measured: f64, target: f64 },

    /// Metric inputs with a single class, or a split that cannot produce both classes.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn empty(msg: impl Into<String>) -> Self {
        Error::EmptyInput(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// Process exit code for the CLI: 1 for file errors, 3 for degenerate
    /// metric inputs, 2 for everything else (validation).
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io(_) => 1,
            Error::Degenerate(_) => 3,
            _ => 2,
        }
    }
}
