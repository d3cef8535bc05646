//! Dense matrices and small feedforward networks with reverse-mode
//! gradients and Adam.

mod checkpoint;
mod matrix;
mod mlp;
mod penalty;

pub use checkpoint::{Checkpoint, FlatAdam};
pub use matrix::{one_hot, Matrix};
pub use mlp::{
    sigmoid, Activation, AdamState, GradientBundle, MlpModel, Trace, ADAM_BETA1, ADAM_BETA2,
    ADAM_EPS, LEAKY_SLOPE,
};
pub(crate) use penalty::penalty_parts;
pub use penalty::{
    grad_penalty_surrogate, grad_penalty_with_directions, random_directions, PenaltyOutput,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0} values")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Json(#[from] serde_json::Error),
}
