//! Error type shared by every module.

use thiserror::Error;

/// Failure modes of the library. Each variant maps to one CLI exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    /// A scalar parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A kernel violates the structural hypotheses (monotonicity, integrability).
    #[error("admissibility error: {0}")]
    Admissibility(String),
    /// Mesh is inconsistent or the discrete system is singular.
    #[error("mesh error: {0}")]
    Mesh(String),
    /// Evaluation requested outside a tabulated range.
    #[error("range error: {0}")]
    Range(String),
    /// Quadrature or iteration did not reach its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Operation requires a different kernel kind.
    #[error("kind error: {0}")]
    Kind(String),
    /// Discretization produced an inadmissible value (too coarse mesh).
    #[error("discretization failure: {0}")]
    Discretization(String),
    /// Configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),
    /// Requested combination is not supported.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    /// I/O failure while writing artifacts.
    #[error("io error: {0}")]
    Io(String),
}

impl FracError {
    /// Process exit code: 2 config, 3 numeric, 4 admissibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            FracError::Config(_) | FracError::Parameter(_) | FracError::Unsupported(_) => 2,
            FracError::Admissibility(_) | FracError::Kind(_) => 4,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for FracError {
    fn from(e: std::io::Error) -> Self {
        FracError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FracError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(FracError::Parameter(msg.into()))
}
