use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsdError {
    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("malformed diagram: {0}")]
    Structure(String),

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("leg count mismatch: expected {expected}, got {got}")]
    LegMismatch { expected: usize, got: usize },

    #[error("evaluation on a pole at {0}")]
    OnPole(Complex64),

    #[error("singular matrix at omega = {omega}")]
    Singular { omega: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type PsdResult<T> = Result<T, PsdError>;
