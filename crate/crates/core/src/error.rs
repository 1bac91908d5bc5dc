use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A required column is absent or the column mapping is inconsistent.
    #[error("schema error: {0}")]
    Schema(String),
    /// A cell could not be parsed. `row` is the 1-based data row.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    /// Data violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("degenerate propensity: {0}")]
    DegeneratePropensity(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
