use thiserror::Error;

/// Errors raised by the simulation and optimization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent state: {0}")]
    InconsistentState(String),
    #[error("Fock-space truncation: {0}")]
    Truncation(String),
    #[error("numerical consistency: {0}")]
    NumericalConsistency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),
}

pub type Result<T> = std::result::Result<T, Error>;
