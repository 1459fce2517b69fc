use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the georeason pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate entity id `{id}`")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    CoordinateRange { lat: f64, lon: f64 },
    #[error("unknown entity id `{0}`")]
    UnknownEntity(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::CoordinateRange { .. } => "coordinate_range",
            Error::UnknownEntity(_) => "unknown_entity",
            Error::Invalid(_) => "invalid",
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Format(_) => "format",
            Error::Json(_) => "json",
        }
    }
}
