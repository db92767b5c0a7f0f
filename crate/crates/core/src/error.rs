use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("malformed {kind} file {path}: {reason}")]
    MalformedFile {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate particle set: zero mass but {expected} targets requested")]
    DegenerateMass { expected: usize },

    #[error("k-means needs k <= number of points (k = {k}, points = {points})")]
    TooFewPoints { k: usize, points: usize },

    #[error("duplicate target id {0} in information registry")]
    DuplicateTarget(u32),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
