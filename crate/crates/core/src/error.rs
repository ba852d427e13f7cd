use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("unknown landmark id `{id}` in slide `{slide}`")]
    UnknownLandmark { slide: String, id: String },

    #[error("inconsistent slide ordering: {0}")]
    SlideOrder(String),

    #[error("missing boundary for landmark `{0}`")]
    MissingBoundary(String),

    #[error("missing cell types: {0}")]
    MissingCellType(String),

    #[error("singular stain matrix (condition number {0:.3e})")]
    SingularStainMatrix(f64),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("json {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }
}
