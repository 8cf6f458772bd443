use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: plan has dimension {found}, expected {expected}")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: duplicate agent id {id}")]
    DuplicateAgent { path: PathBuf, id: usize },

    #[error("{path}: agent ids must be contiguous from 0, missing agent {id}")]
    MissingAgent { path: PathBuf, id: usize },

    #[error("{path}: no agent plan files found")]
    EmptyDataset { path: PathBuf },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
