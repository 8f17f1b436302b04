use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("float overflow in recurrence at index {index}")]
    Overflow { index: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("negative intermediate value n_{index} = {value:e}")]
    NegativeCount { index: usize, value: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("cell {0} is empty")]
    EmptyCell(usize),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
