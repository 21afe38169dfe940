use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("order mismatch: {0}")]
    OrderMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("duplicate index {0}")]
    DuplicateIndex(String),

    #[error("non-finite value {0}")]
    NonFinite(String),

    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("negative entry in lower-order tensor: {0}")]
    NegativeEntry(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive diagonal entry in row {row}: {value}")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("negative radicand in row {row}: {value}")]
    NegativeRadicand { row: usize, value: f64 },

    #[error("maximum number of iterations ({0}) exceeded")]
    MaxIterations(usize),

    #[error("numerically singular matrix (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("positivity safeguard exhausted at iteration {0}")]
    PositivityExhausted(usize),

    #[error("tensor is not a strong M-tensor: {0}")]
    NotStrongM(String),

    #[error("no solution found")]
    NoSolutionFound,

    #[error("stability bound violated: max u = {max_u}, bound = {bound}")]
    StabilityViolation { max_u: f64, bound: f64 },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OrderMismatch(_) => "order_mismatch",
            Error::IndexOutOfRange(_) => "index_out_of_range",
            Error::DuplicateIndex(_) => "duplicate_index",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidPermutation(_) => "invalid_permutation",
            Error::NegativeEntry(_) => "negative_entry",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonPositiveDiagonal { .. } => "non_positive_diagonal",
            Error::NegativeRadicand { .. } => "negative_radicand",
            Error::MaxIterations(_) => "max_iterations",
            Error::Singular { .. } => "singular",
            Error::PositivityExhausted(_) => "positivity_exhausted",
            Error::NotStrongM(_) => "not_strong_m",
            Error::NoSolutionFound => "no_solution_found",
            Error::StabilityViolation { .. } => "stability_violation",
            Error::VerificationFailed(_) => "verification_failed",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the error's category: 1 invalid input, 4
    /// numerical failure, 5 structure hypothesis violated, 6 policy set
    /// exhausted, 7 a post-solve check failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonPositiveDiagonal { .. }
            | Error::NegativeRadicand { .. }
            | Error::MaxIterations(_)
            | Error::Singular { .. }
            | Error::PositivityExhausted(_) => 4,
            Error::NotStrongM(_) => 5,
            Error::NoSolutionFound => 6,
            Error::StabilityViolation { .. } | Error::VerificationFailed(_) => 7,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
