use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("eigensolver did not converge for a {dim}x{dim} matrix")]
    EigenNonConvergence { dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel sequence ends at t = {available}, requested t = {requested}")]
    Horizon { requested: usize, available: usize },

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("path enumeration needs {paths:.3e} paths, above the guard of {guard:.0e}")]
    EnumerationGuard { paths: f64, guard: f64 },

    #[error("epsilon {eps} outside the sub-Gaussian window (0, {window}] ({name})")]
    OutsideWindow { eps: f64, window: f64, name: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
