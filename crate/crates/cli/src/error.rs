use relnet_core::market::MarketError;
use relnet_core::model::ModelError;
use relnet_core::nn::{CheckpointError, NnError};
use relnet_core::train::TrainError;
use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::GradCheck(_) => 5,
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::Io { .. } | MarketError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Divergence(_) => CliError::Divergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Market(m) => m.into(),
            TrainError::Model(m) => m.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}
