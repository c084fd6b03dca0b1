use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: {message}")]
    InvalidEvent { line: u64, message: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("preference weights are all zero")]
    DegenerateWeights,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid period scheme: {0}")]
    InvalidPeriod(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("chain initialisation failed: {0}")]
    Initialization(String),

    #[error("the hierarchical model needs at least two periods, got {0}; fit the single model instead")]
    SinglePeriod(usize),

    #[error("trace is constant")]
    DegenerateTrace,

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
