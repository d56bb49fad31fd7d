//! Synthetic streaming market with planted competition.
//!
//! A [`Catalog`] holds the pre-release metadata of every series plus its latent
//! attractiveness. [`Catalog::realize`] turns it into observed [`SeriesRecord`]s:
//! the main target is reduced by attractive competitors released nearby, the
//! auxiliary popularity index is not. Noise is drawn per series id, so adding or
//! removing a catalog entry leaves the noise of every other series untouched.

mod dataset;
mod features;
mod generator;
mod io;

pub use dataset::{
    build_relational_dataset, select_related, temporal_split, RelatedSelection, TargetScaling, TemporalSplit,
};
pub use features::{FeatureEncoder, MAX_EPISODES, NUMERIC_FEATURES};
pub use generator::{draw_catalog, generate_market, Catalog, CatalogEntry, GeneratorConfig};
pub use io::{load_dataset, save_dataset, FORMAT_VERSION};

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("{field} id {value} outside vocabulary of size {cardinality}")]
    OutOfVocabulary {
        field: &'static str,
        value: usize,
        cardinality: usize,
    },
    #[error("temporal split at day {split_day} leaves the {side} side empty")]
    EmptySplit { side: &'static str, split_day: u32 },
    #[error("{0}")]
    Scaling(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// One series as observed by the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub id: u64,
    pub release_day: u32,
    pub genre_id: usize,
    pub director_id: usize,
    pub lead_actor_id: usize,
    pub episode_count: u32,
    pub budget_score: f64,
    pub buzz_score: f64,
    pub view_count: f64,
    pub popularity_index: f64,
}

/// Records sorted by release day (ties by id) plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    pub config: GeneratorConfig,
    pub encoder: FeatureEncoder,
    records: Vec<SeriesRecord>,
}

impl MarketDataset {
    /// Sorts `records` and rejects duplicate ids.
    pub fn new(
        config: GeneratorConfig,
        encoder: FeatureEncoder,
        mut records: Vec<SeriesRecord>,
    ) -> Result<Self, MarketError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id) {
                return Err(MarketError::Config(format!("duplicate series id {}", r.id)));
            }
        }
        records.sort_by_key(|r| (r.release_day, r.id));
        Ok(Self {
            config,
            encoder,
            records,
        })
    }

    pub fn records(&self) -> &[SeriesRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }
}
