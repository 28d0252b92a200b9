use std::io;

use thiserror::Error;

/// Errors surfaced by the library and the `spad` binary.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sensor, schedule, or run configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data violates a precondition (shape, range, ordering).
    #[error("input error: {0}")]
    Input(String),

    /// A binary or text file could not be parsed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// The remote score service misbehaved or was unreachable.
    #[error("remote prior error: {0}")]
    Remote(String),

    /// The reconstruction loop could not continue.
    #[error("reconstruction aborted at step {step}: {message}")]
    Reconstruction { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
