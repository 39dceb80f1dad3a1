use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error(
        "inexact prox failed to certify: best gap {best_gap:e} > tolerance {epsilon:e} after {iterations} iterations"
    )]
    ProxNotCertified { best_gap: f64, epsilon: f64, iterations: usize },

    #[error("step condition violated at stage {stage}, step {step}: lhs {lhs:e} > rhs {rhs:e}")]
    StepConditionViolated { stage: usize, step: usize, lhs: f64, rhs: f64 },

    #[error("no convergence within {iterations} iterations (best value {best:e})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
