use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("model load error: {0}")]
    ModelLoad(String),

    #[error("enumeration over {features} features exceeds the limit of {limit}")]
    TooManyFeatures { features: usize, limit: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable code for machine-parsable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
            Error::Schema(_) => "E_SCHEMA",
            Error::Parse(_) => "E_PARSE",
            Error::Param(_) => "E_PARAM",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::Data(_) => "E_DATA",
            Error::ModelLoad(_) => "E_MODEL_LOAD",
            Error::TooManyFeatures { .. } => "E_ENUMERATION",
        }
    }
}
