use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("value {value} at row {row}, column {column} exceeds declared arity {arity}")]
    ValueOutOfRange {
        row: usize,
        column: usize,
        value: usize,
        arity: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing table for position {position} with parent {parent}")]
    MissingTable { position: usize, parent: String },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
