//! Popularity prediction with a relation network and an auxiliary task.
//!
//! The crate is split into four layers:
//!
//! - [`nn`]: a small, dependency-free differentiable-layer toolkit (dense, ReLU,
//!   batch norm, dropout, momentum SGD, finite-difference gradient checking).
//! - [`model`]: the composed network. A shared encoder `e` maps the main object
//!   and its `n` related objects to representations, a relation block `g` scores
//!   each (main, related) pair, an aggregator `f` reads the summed relations, and
//!   two heads `h`/`h'` predict the main and auxiliary targets.
//! - [`market`]: a synthetic streaming market with planted competition effects,
//!   feature encoding, related-series selection and JSON-lines persistence.
//! - [`train`]: mini-batch training, R² evaluation and the three-arm ablation.

pub mod market;
pub mod model;
pub mod nn;
pub mod train;

pub use market::{GeneratorConfig, MarketDataset, SeriesRecord};
pub use model::{ModelConfig, RelNetModel, RelationalSample, Variant};
pub use train::{AblationReport, EvalReport, TrainConfig, TrainReport};
