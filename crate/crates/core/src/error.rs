use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing file {path}: {source}")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("underdetermined system: numerical rank {rank} < {unknowns} unknowns")]
    Underdetermined { rank: usize, unknowns: usize },

    #[error(
        "design matrix of {rows} x {cols} needs {required_bytes} bytes, exceeding the budget of {budget_bytes} bytes"
    )]
    MemoryBudget {
        rows: usize,
        cols: usize,
        required_bytes: u128,
        budget_bytes: u128,
    },

    #[error("undefined MSE: reference energy under the mask is zero")]
    UndefinedDenominator,

    #[error("division by zero: {0}")]
    Division(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
