use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("malformed {format} input: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn format_err(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}
