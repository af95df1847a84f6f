use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmetrixError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("{name} = {value} is outside the valid range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for QmetrixError {
    fn from(e: std::io::Error) -> Self {
        QmetrixError::Io(e.to_string())
    }
}

impl From<csv::Error> for QmetrixError {
    fn from(e: csv::Error) -> Self {
        QmetrixError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QmetrixError {
    fn from(e: serde_json::Error) -> Self {
        QmetrixError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QmetrixError>;

pub(crate) fn out_of_range(name: &'static str, value: f64, range: impl Into<String>) -> QmetrixError {
    QmetrixError::OutOfRange {
        name,
        value,
        range: range.into(),
    }
}
