//! Mini-batch training, R² evaluation and the three-arm ablation.

mod ablation;
mod eval;
mod fit;

pub use ablation::{render_table, run_ablation, threads_from_env, AblationReport, ArmSummary, Cell, Delta};
pub use eval::{evaluate, evaluate_r2, r_squared, EvalReport};
pub use fit::{minibatch_iter, prepare_split, train, PreparedSplit, TrainConfig, TrainReport};

use thiserror::Error;

use crate::market::MarketError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("cannot evaluate: {0}")]
    Eval(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Market(#[from] MarketError),
}
