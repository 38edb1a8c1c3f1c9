//! Error types shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("schema error: missing or invalid column `{column}` in {table}")]
    Schema { table: String, column: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("batch covers a single class: {0}")]
    ClassCoverage(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("threshold selection error: {0}")]
    Threshold(String),

    #[error("undefined curve: {0}")]
    UndefinedCurve(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short category tag used in CLI error messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::NonFinite(_) => "non-finite",
            Error::Schema { .. } => "schema",
            Error::Range(_) => "range",
            Error::Consistency(_) => "consistency",
            Error::DegenerateBatch(_) => "degenerate-batch",
            Error::ClassCoverage(_) => "class-coverage",
            Error::Stratification(_) => "stratification",
            Error::Threshold(_) => "threshold",
            Error::UndefinedCurve(_) => "undefined-curve",
            Error::Training { .. } => "training",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
