use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("pair sets are not aligned: {0}")]
    Misaligned(String),

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    #[error("eigen iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("objective became non-finite at iteration {iteration}; reduce the step size rho")]
    Diverged { iteration: usize },

    #[error("non-finite value from {0}")]
    NonFinite(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited text in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric { row: usize, column: usize, value: String },

    #[error("empty label at row {row}")]
    EmptyLabel { row: usize },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) => ErrorKind::Config,
            Error::NotPositiveDefinite { .. }
            | Error::NoConvergence { .. }
            | Error::Diverged { .. }
            | Error::NonFinite(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
