use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::market::{build_relational_dataset, temporal_split, MarketDataset, TargetScaling};
use crate::model::{LossParts, ModelError, RelNetModel, RelationalSample};
use crate::nn::{Mode, MomentumOptimizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub shuffle: bool,
    /// Training stops when the mean per-sample epoch loss exceeds this.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 2e-4,
            momentum: 0.9,
            seed: 0,
            shuffle: true,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, batch_norm_trains: bool) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 || (batch_norm_trains && self.batch_size < 2) {
            return Err(TrainError::Config(format!(
                "batch_size must be >= {} (got {})",
                if batch_norm_trains { 2 } else { 1 },
                self.batch_size
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.divergence_threshold.is_nan() || self.divergence_threshold <= 0.0 {
            return Err(TrainError::Config("divergence_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Splits `0..len` into batches, shuffled when `rng` is given. A trailing batch
/// of one sample is merged into its predecessor when `fold_singleton` is set.
pub fn minibatch_iter(
    len: usize,
    batch_size: usize,
    rng: Option<&mut ChaCha8Rng>,
    fold_singleton: bool,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if fold_singleton && batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    /// Per-epoch sums over mini-batches; `reg` is the penalty at epoch end.
    pub epochs: Vec<LossParts>,
    /// Zero-based epoch at which training stopped on divergence.
    pub diverged_at: Option<usize>,
    /// Share of epoch transitions whose total loss did not increase.
    pub non_increasing_fraction: f64,
    pub warnings: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<&LossParts> {
        self.epochs.last()
    }
}

/// Trains in place. Divergence is reported in the returned report; the model
/// keeps the parameters of the step that diverged.
pub fn train(
    model: &mut RelNetModel,
    samples: &[RelationalSample],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let mcfg = model.config().clone();
    let batch_norm_trains = mcfg.encoder_batch_norm || mcfg.rn_batch_norm;
    config.validate(batch_norm_trains)?;
    if samples.is_empty() {
        return Err(TrainError::Config("no training samples".into()));
    }
    let start = Instant::now();
    let mut optimizer = MomentumOptimizer::new(config.learning_rate, config.momentum, mcfg.gamma_l2)
        .map_err(ModelError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut diverged_at = None;
    let mut batch = Vec::with_capacity(config.batch_size + 1);

    'outer: for epoch in 0..config.epochs {
        let order = minibatch_iter(
            samples.len(),
            config.batch_size,
            config.shuffle.then_some(&mut rng),
            batch_norm_trains,
        );
        let (mut main, mut aux) = (0.0, 0.0);
        for idx in order {
            batch.clear();
            batch.extend(idx.iter().map(|&i| samples[i].clone()));
            let (parts, ctx) = match model.loss(&batch, Mode::Train) {
                Ok(v) => v,
                Err(ModelError::Divergence(_)) => {
                    diverged_at = Some(epoch);
                    break 'outer;
                }
                Err(e) => return Err(e.into()),
            };
            main += parts.main;
            aux += parts.aux;
            model.backward(&ctx)?;
            optimizer.step(model.params_mut()).map_err(ModelError::from)?;
        }
        let reg = model.l2_penalty();
        let total = if mcfg.variant.has_aux() {
            main + mcfg.lambda_aux * aux + reg
        } else {
            main + reg
        };
        epochs.push(LossParts { total, main, aux, reg });
        if !total.is_finite() || total / samples.len() as f64 > config.divergence_threshold {
            diverged_at = Some(epoch);
            break;
        }
    }
    model.clear_caches();

    let transitions = epochs.len().saturating_sub(1);
    let non_increasing = epochs.windows(2).filter(|w| w[1].total <= w[0].total).count();
    let non_increasing_fraction = if transitions == 0 {
        1.0
    } else {
        non_increasing as f64 / transitions as f64
    };
    let mut warnings = Vec::new();
    if non_increasing_fraction < 0.9 {
        warnings.push(format!(
            "training loss decreased in only {:.0}% of epoch transitions",
            100.0 * non_increasing_fraction
        ));
    }
    if let Some(epoch) = diverged_at {
        warnings.push(format!("diverged at epoch {epoch}"));
    }
    Ok(TrainReport {
        seed: config.seed,
        epochs,
        diverged_at,
        non_increasing_fraction,
        warnings,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Standardized training samples, raw-target test samples and the scaling
/// fitted on the training side.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: Vec<RelationalSample>,
    pub test: Vec<RelationalSample>,
    pub scaling: TargetScaling,
    pub split_day: u32,
    pub prediction_day_offset: u32,
}

pub fn prepare_split(
    dataset: &MarketDataset,
    n_related: usize,
    split_day: u32,
    prediction_day_offset: u32,
) -> Result<PreparedSplit, TrainError> {
    let mut view = dataset.clone();
    view.encoder = dataset.encoder.for_offset(prediction_day_offset);
    let samples = build_relational_dataset(&view, n_related)?;
    let (train, test) = temporal_split(&view, split_day)?.apply(&samples);
    let scaling = TargetScaling::fit(&train)?;
    Ok(PreparedSplit {
        train: scaling.standardize(&train),
        test,
        scaling,
        split_day,
        prediction_day_offset,
    })
}
