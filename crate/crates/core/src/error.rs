use thiserror::Error;

/// Errors produced by the clustering engine.
#[derive(Debug, Error)]
pub enum TinderError {
    /// Inputs with incompatible shapes were combined.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    /// The session is in a state that forbids the requested transition.
    #[error("illegal session state: {0}")]
    IllegalState(String),
    /// A CSV cell could not be parsed. Rows and columns are 1-based.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = TinderError> = std::result::Result<T, E>;
