//! Error types shared across the workbench.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("parameter out of bounds: {0}")]
    Bounds(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cube is not aligned to the dyadic grid: {0}")]
    Alignment(String),

    #[error("evaluation point within {threshold:e} of an atom")]
    Singularity { threshold: f64 },

    #[error("sign condition failed on [{lo}, {hi}]: monotonicity violated")]
    MonotonicityViolation { lo: f64, hi: f64 },

    #[error(
        "power iteration did not converge after {iters} iterations \
         (Rayleigh bracket [{lower}, {upper}])"
    )]
    Convergence { iters: usize, lower: f64, upper: f64 },

    #[error("bounded overlap violated: observed {observed} > beta = {beta}")]
    OverlapViolation { observed: usize, beta: usize },

    #[error("empty cube family")]
    EmptyFamily,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, WorkbenchError>;
