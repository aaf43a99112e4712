use thiserror::Error;

/// Errors produced by the precoding library.
#[derive(Debug, Error)]
pub enum Error {
    /// The scenario text could not be parsed against the key schema.
    #[error("config parse error: {0}")]
    Parse(String),
    /// A parsed scenario violates one of its invariants.
    #[error("invalid config: {0}")]
    Validation(String),
    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// No multiplier (or assignment) satisfies the constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
