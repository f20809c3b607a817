use thiserror::Error;

/// Errors raised by the selection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("vector of length {0} is not a triangular number d(d+1)/2")]
    NotTriangular(usize),

    #[error("vector of length {0} is not a perfect square")]
    NotSquare(usize),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("invalid selection index: {0}")]
    InvalidSelection(String),

    #[error("discounted system is unstable: a * rho(A) = {0} >= 1")]
    UnstableDiscounted(f64),

    #[error("pair (A, C) is unobservable")]
    Unobservable,

    #[error("history length N = {horizon} is below the observability index K = {index}")]
    HorizonBelowIndex { horizon: usize, index: usize },

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("time index {t} out of range (valid {min}..={max})")]
    OutOfRange { t: usize, min: usize, max: usize },

    #[error("timestamp mismatch: z(t+1) has t = {got}, expected {expected}")]
    TimestampMismatch { expected: usize, got: usize },

    #[error("brute-force search over C({p}, {k}) subsets refused (p > {limit})")]
    CombinatorialBlowup { p: usize, k: usize, limit: usize },

    #[error("estimates disagree on horizon or discount")]
    MixedHorizon,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear solve failed: {0}")]
    Singular(&'static str),

    #[error("numerical decomposition failed: {0}")]
    Decomposition(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
