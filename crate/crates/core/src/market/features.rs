use serde::{Deserialize, Serialize};

use super::{MarketError, SeriesRecord};

/// Episode counts are drawn from `1..=MAX_EPISODES`.
pub const MAX_EPISODES: u32 = 60;

/// `episode_count / MAX_EPISODES`, `budget_score`, `buzz_score`.
pub const NUMERIC_FEATURES: usize = 3;

/// One-hot genre, director and lead-actor blocks followed by the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub genre_count: usize,
    pub director_count: usize,
    pub actor_count: usize,
    /// Emulates predicting long before release, when buzz is not yet known.
    #[serde(default)]
    pub zero_buzz: bool,
}

impl FeatureEncoder {
    pub fn new(genre_count: usize, director_count: usize, actor_count: usize) -> Self {
        Self {
            genre_count,
            director_count,
            actor_count,
            zero_buzz: false,
        }
    }

    /// Buzz is withheld for offsets beyond a month.
    pub fn for_offset(self, prediction_day_offset: u32) -> Self {
        Self {
            zero_buzz: prediction_day_offset > 30,
            ..self
        }
    }

    pub fn input_dim(&self) -> usize {
        self.genre_count + self.director_count + self.actor_count + NUMERIC_FEATURES
    }

    pub fn encode(&self, record: &SeriesRecord) -> Result<Vec<f64>, MarketError> {
        let mut out = vec![0.0; self.input_dim()];
        let blocks = [
            ("genre", record.genre_id, self.genre_count),
            ("director", record.director_id, self.director_count),
            ("lead_actor", record.lead_actor_id, self.actor_count),
        ];
        let mut offset = 0;
        for (field, value, cardinality) in blocks {
            if value >= cardinality {
                return Err(MarketError::OutOfVocabulary {
                    field,
                    value,
                    cardinality,
                });
            }
            out[offset + value] = 1.0;
            offset += cardinality;
        }
        out[offset] = f64::from(record.episode_count) / f64::from(MAX_EPISODES);
        out[offset + 1] = record.budget_score;
        out[offset + 2] = if self.zero_buzz { 0.0 } else { record.buzz_score };
        Ok(out)
    }
}
