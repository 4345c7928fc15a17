//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input series malformed: too short, non-finite values, or bad timestamps.
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    /// A parameter lies outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// CSV ingestion failure, with the 1-based line number of the offending row.
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    /// No observation strictly exceeds the threshold.
    #[error("no exceedances above threshold {threshold}")]
    NoExceedances { threshold: f64 },

    /// An operation needs more data than the input provides.
    #[error("{context}: need at least {need}, found {found}")]
    TooFewObservations {
        context: &'static str,
        need: usize,
        found: usize,
    },

    /// K-gap sample with no gaps.
    #[error("empty K-gap sample")]
    EmptySample,

    /// The extremal index must lie strictly inside (0, 1) for this operation.
    #[error("theta must lie in (0, 1), got {0}")]
    ThetaOutOfDomain(f64),

    /// The information-matrix test is undefined for this sample.
    #[error("information matrix test undefined: {0}")]
    UndefinedTest(String),

    /// Deseasonalize/detrend preprocessing failure.
    #[error("preprocessing: {0}")]
    Preprocessing(String),

    /// A numerical routine failed to converge.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}
