use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The call sequence was invalid (e.g. stepping a finished episode).
    #[error("usage error: {0}")]
    Usage(String),

    /// A gradient or update produced a non-finite value.
    #[error("training error: non-finite value in parameter `{param}`")]
    NonFinite { param: String },

    /// A floating point quantity underflowed or overflowed.
    #[error("overflow: {0}")]
    Overflow(String),

    /// A condition that the preconditions should have ruled out.
    #[error("internal error: {0}")]
    Internal(String),

    /// Invalid configuration; `key` names the offending entry.
    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    /// A checkpoint or tensor file could not be parsed.
    #[error("corrupt checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
