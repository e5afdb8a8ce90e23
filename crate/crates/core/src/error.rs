use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("duplicate entry for predictor `{predictor}` in month `{month}`")]
    DuplicateKey { predictor: String, month: String },

    #[error("no parsable rows in input")]
    NoParsableRows,

    #[error("month `{0}` is missing from the factor panel")]
    MonthMismatch(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("no t-statistics exceed the hurdle {hurdle}; the bound is undefined because there are no discoveries")]
    NoDiscoveries { hurdle: f64 },

    #[error("mean published |t| of {mean_pub_t} does not exceed the hurdle {hurdle}; exponential extrapolation is infeasible")]
    InfeasibleExtrapolation { mean_pub_t: f64, hurdle: f64 },

    #[error("null distribution assigns zero mass to [{lo}, {hi}]")]
    ZeroNullMass { lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for errors that signal a well-formed request with no computable
    /// answer (as opposed to bad input data).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::NoDiscoveries { .. }
                | Error::InfeasibleExtrapolation { .. }
                | Error::ZeroNullMass { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
