use thiserror::Error;

/// Errors produced by the pclfpca library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV format error: {0}")]
    Format(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("sampler aborted at sweep {sweep}: non-finite value in {parameter}")]
    NonFinite { sweep: usize, parameter: String },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
