use thiserror::Error;

/// Errors produced by mesh construction, operator assembly and solvers.
#[derive(Debug, Error)]
pub enum OtError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OtError>;
