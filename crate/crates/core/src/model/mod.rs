//! The composed popularity model and its joint loss.

mod config;
mod objective;
mod relnet;


pub use config::{ModelConfig, RnMode, Variant};
pub use objective::ModelObjective;
pub use relnet::{LossContext, LossParts, Prediction, RelNetModel, RelationalSample};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("backward needs the context of the latest training-mode loss")]
    StaleCache,
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
