use serde::{Deserialize, Serialize};

use super::{MarketDataset, MarketError, SeriesRecord};
use crate::model::RelationalSample;

/// The `n` related series of one target; zero-record padding is counted, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatedSelection<'a> {
    pub chosen: Vec<&'a SeriesRecord>,
    pub pad_count: usize,
}

impl RelatedSelection<'_> {
    pub fn len(&self) -> usize {
        self.chosen.len() + self.pad_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Series released within the competition window of `target`, most popular
/// first, ties broken by closer release day and then by smaller id.
pub fn select_related<'a>(dataset: &'a MarketDataset, target: &SeriesRecord, n: usize) -> RelatedSelection<'a> {
    if n == 0 {
        return RelatedSelection {
            chosen: Vec::new(),
            pad_count: 0,
        };
    }
    let window = dataset.config.competition_window_days;
    let day = target.release_day;
    let records = dataset.records();
    let lo = records.partition_point(|r| r.release_day.saturating_add(window) < day);
    let hi = records.partition_point(|r| r.release_day <= day.saturating_add(window));
    let mut candidates: Vec<&SeriesRecord> = records[lo..hi].iter().filter(|r| r.id != target.id).collect();
    candidates.sort_by(|a, b| {
        b.popularity_index
            .total_cmp(&a.popularity_index)
            .then(a.release_day.abs_diff(day).cmp(&b.release_day.abs_diff(day)))
            .then(a.id.cmp(&b.id))
    });
    candidates.truncate(n);
    RelatedSelection {
        pad_count: n - candidates.len(),
        chosen: candidates,
    }
}

/// One sample per record, in record order: `y = ln(view_count)`,
/// `y_aux = popularity_index`, padding encoded as all-zero vectors.
pub fn build_relational_dataset(dataset: &MarketDataset, n: usize) -> Result<Vec<RelationalSample>, MarketError> {
    let encoder = &dataset.encoder;
    dataset
        .records()
        .iter()
        .map(|target| {
            let selection = select_related(dataset, target, n);
            let mut related = selection
                .chosen
                .iter()
                .map(|r| encoder.encode(r))
                .collect::<Result<Vec<_>, _>>()?;
            related.resize(n, vec![0.0; encoder.input_dim()]);
            Ok(RelationalSample {
                x: encoder.encode(target)?,
                related,
                y: target.view_count.ln(),
                y_aux: target.popularity_index,
            })
        })
        .collect()
}

/// Record indices on either side of a release-day cutoff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TemporalSplit {
    /// Picks the split out of anything indexed like the dataset's records.
    pub fn apply<T: Clone>(&self, items: &[T]) -> (Vec<T>, Vec<T>) {
        let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
        (pick(&self.train), pick(&self.test))
    }
}

/// Train is `release_day < split_day`, test the rest.
pub fn temporal_split(dataset: &MarketDataset, split_day: u32) -> Result<TemporalSplit, MarketError> {
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.records()[i].release_day < split_day);
    if train.is_empty() {
        return Err(MarketError::EmptySplit {
            side: "train",
            split_day,
        });
    }
    if test.is_empty() {
        return Err(MarketError::EmptySplit { side: "test", split_day });
    }
    Ok(TemporalSplit { train, test })
}

/// Per-target standardization fitted on a training portion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub y_mean: f64,
    pub y_std: f64,
    pub aux_mean: f64,
    pub aux_std: f64,
}

impl TargetScaling {
    pub fn identity() -> Self {
        Self {
            y_mean: 0.0,
            y_std: 1.0,
            aux_mean: 0.0,
            aux_std: 1.0,
        }
    }

    pub fn fit(samples: &[RelationalSample]) -> Result<Self, MarketError> {
        let (y_mean, y_std) = mean_std(samples.iter().map(|s| s.y))?;
        let (aux_mean, aux_std) = mean_std(samples.iter().map(|s| s.y_aux))?;
        Ok(Self {
            y_mean,
            y_std,
            aux_mean,
            aux_std,
        })
    }

    pub fn standardize(&self, samples: &[RelationalSample]) -> Vec<RelationalSample> {
        samples
            .iter()
            .map(|s| RelationalSample {
                y: (s.y - self.y_mean) / self.y_std,
                y_aux: (s.y_aux - self.aux_mean) / self.aux_std,
                ..s.clone()
            })
            .collect()
    }

    /// Maps a standardized main prediction back to log views.
    pub fn unscale_main(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Result<(f64, f64), MarketError> {
    let n = values.clone().count();
    if n < 2 {
        return Err(MarketError::Scaling(format!("need at least 2 samples to fit scaling, got {n}")));
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0 && var.is_finite()) {
        return Err(MarketError::Scaling("target is constant or non-finite".to_string()));
    }
    Ok((mean, var.sqrt()))
}
