use thiserror::Error;

/// Errors produced by the symmetry pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: {left} qubits vs {right} qubits")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("resource limit exceeded: {what} ({size} > cap {cap})")]
    Resource {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no Clifford realization found: {0}")]
    NotRealizable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("relative entropy diverges: support of the first state is not contained in the second")]
    InfiniteDivergence,
}

pub type Result<T> = std::result::Result<T, Error>;
