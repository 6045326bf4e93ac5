use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {truths} true channels vs {estimates} estimates")]
    LengthMismatch { truths: usize, estimates: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("{path}: parse error on line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("mixture component {component} collapsed again at iteration {iteration}")]
    DegenerateComponent { component: usize, iteration: usize },

    #[error("selected dictionary atoms are numerically dependent")]
    RankDeficientSupport,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
