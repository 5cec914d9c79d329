use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column \"{column}\": cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate column name \"{0}\"")]
    DuplicateColumn(String),

    #[error("response column {0} not found")]
    MissingResponse(String),

    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("column \"{0}\" is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design is rank deficient at column {index} (pivot {pivot:.3e})")]
    RankDeficient { index: usize, pivot: f64 },

    #[error(
        "degenerate path at lambda = {lambda}: predictors {first} and {second} change \
         simultaneously; jitter the response infinitesimally and retry"
    )]
    Degenerate {
        lambda: f64,
        first: usize,
        second: usize,
    },

    #[error("path did not reach lambda = 0 within {0} steps")]
    MaxStepsExceeded(usize),

    #[error("lambda = {lambda} lies outside the segment [{lo}, {hi}]")]
    LambdaOutOfSegment { lambda: f64, lo: f64, hi: f64 },

    #[error("no convergence after {iterations} sweeps (KKT violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("too many degenerate replications: {skipped} of {total}")]
    TooManySkipped { skipped: usize, total: usize },
}

impl Error {
    /// Process exit code for the command-line tool: 2 input, 3 degeneracy, 4 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Degenerate { .. } | Error::RankDeficient { .. } | Error::TooManySkipped { .. } => 3,
            Error::MaxStepsExceeded(_) | Error::NotConverged { .. } => 4,
            _ => 2,
        }
    }
}
