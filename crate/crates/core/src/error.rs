use thiserror::Error;

/// Errors raised by estimators, samplers and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {arg} = {value} outside its domain: {reason}")]
    Domain {
        arg: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bandwidth matrix is not positive definite (h11={h11}, h22={h22}, h12={h12})")]
    NotPositiveDefinite { h11: f64, h22: f64, h12: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("no local data near ({s}, {t})")]
    NoLocalData { s: f64, t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(arg: &'static str, value: f64, reason: &'static str) -> Error {
    Error::Domain { arg, value, reason }
}
