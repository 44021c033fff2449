use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: {0}")]
    Disconnected(String),

    #[error("invalid compressor: {0}")]
    InvalidCompressor(String),

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid step sizes: {0}")]
    StepSizes(String),

    #[error("message delivery violated: {0}")]
    Delivery(String),

    #[error("iterate became non-finite at iteration {t}")]
    Diverged { t: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
