use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input does not match the shape a model or loss expects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A trace or optimizer state was used with a model it does not belong to.
    #[error("state mismatch: {0}")]
    State(String),

    #[error("non-finite value at {location}")]
    Numeric { location: String },

    #[error("invalid config `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("data error in {source_name}: {message}")]
    Data { source_name: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            source_name: source_name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Numeric { .. } => 4,
            _ => 3,
        }
    }
}
