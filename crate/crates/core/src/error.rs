use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown tree node {0}")]
    UnknownNode(usize),

    #[error("tree is empty")]
    EmptyTree,

    #[error("frontier is empty")]
    EmptyFrontier,

    #[error("rank {rank} out of range for frontier of size {size}")]
    RankOutOfRange { rank: usize, size: usize },

    #[error("start configuration is infeasible: {0}")]
    InfeasibleStart(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("malformed image: {0}")]
    Image(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
