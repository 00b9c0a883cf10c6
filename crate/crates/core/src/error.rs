use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    #[error("entity type conflict: {0}")]
    TypeConflict(String),

    #[error("{doc}: {message}")]
    Parse { doc: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible problem, violated rows: {0:?}")]
    Infeasible(Vec<usize>),

    #[error("instance too large for exhaustive search: {pairs} pairs (limit {limit})")]
    TooLarge { pairs: usize, limit: usize },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("document mismatch: {0}")]
    DocumentMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(doc: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            doc: doc.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
