use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;
use crate::interp::{ExecError, ParseError};
use crate::valuefn::ValueError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for engine, run and CLI operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} line {line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Value(#[from] ValueError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Exec(#[from] ExecError),

    #[error("no value-improving pairs available for any input after initialization")]
    NoPairsAvailable,

    #[error("pair set is empty")]
    EmptyPairSet,

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config, 3 backend, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Format { .. } | Error::Parse(_) => 2,
            Error::Backend(_) => 3,
            Error::Value(ValueError::MissingPayload { .. }) => 2,
            Error::Value(_) => 3,
            Error::NoPairsAvailable | Error::EmptyPairSet => 2,
            Error::Exec(_) | Error::Invariant(_) => 4,
        }
    }
}
