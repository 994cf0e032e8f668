use std::io;

use thiserror::Error;

/// Errors produced by the solvers and diagnostics in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument {value} outside tabulated range [{min}, {max}]")]
    Extrapolation { value: f64, min: f64, max: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("accuracy target {target:e} not met (achieved {achieved:e}): {context}")]
    Accuracy {
        target: f64,
        achieved: f64,
        context: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("box too small: {0}")]
    BoxSize(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iteration diverged after {iterations} iterations: {reason}")]
    Divergence { iterations: usize, reason: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("sampling envelope too loose: acceptance rate {rate:e}")]
    Envelope { rate: f64 },

    #[error("{failed} of {total} runs did not converge: {details}")]
    Partial {
        failed: usize,
        total: usize,
        details: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
