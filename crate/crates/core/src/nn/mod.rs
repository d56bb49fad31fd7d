//! Minimal differentiable-layer toolkit, all in `f64`.

mod activation;
mod batchnorm;
mod checkpoint;
mod dense;
mod dropout;
pub mod gradcheck;
mod init;
mod mlp;
mod optim;
mod tensor;

pub use activation::{relu, relu_backward};
pub use batchnorm::BatchNormLayer;
pub use checkpoint::{write_atomic, Checkpoint, CheckpointError, ParamRecord, RunningStatRecord};
pub use dense::DenseLayer;
pub use dropout::DropoutLayer;
pub use gradcheck::{gradient_check, GradCheckReport, Objective, ParamCheck};
pub use init::{he_normal, seeded_rng};
pub use mlp::{LayerSpec, MlpBlock, MlpLayer};
pub use optim::{l2_grad, l2_penalty, MomentumOptimizer};
pub use tensor::{Matrix, ParamTensor};

use thiserror::Error;

/// Whether a forward pass trains (batch statistics, dropout, caching) or infers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{layer}: expected input width {expected}, got {actual}")]
    ShapeMismatch {
        layer: String,
        expected: usize,
        actual: usize,
    },
    #[error("{layer}: backward called without a cached training forward pass")]
    MissingCache { layer: String },
    #[error("{layer}: batch normalization needs at least 2 rows in training mode, got {rows}")]
    BatchTooSmall { layer: String, rows: usize },
    #[error("optimizer state for `{name}` does not match the parameter store")]
    OptimizerMismatch { name: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
