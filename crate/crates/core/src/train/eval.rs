use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::market::TargetScaling;
use crate::model::{RelNetModel, RelationalSample, Variant};

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r_squared: f64,
    pub mae: f64,
    pub n_samples: usize,
    pub variant: Variant,
    /// Days before release the features are assumed known. A label only.
    pub prediction_day_offset: u32,
}

/// `1 − Σ(y−ŷ)² / Σ(y−ȳ)²` with `ȳ` the mean of `y`.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64, TrainError> {
    if y.len() != y_hat.len() {
        return Err(TrainError::Eval(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < 2 {
        return Err(TrainError::Eval(format!("need at least 2 samples, got {}", y.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(TrainError::Eval("target is constant, R² undefined".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Inference-mode evaluation. Predictions are mapped back through `scaling`
/// and compared against the raw main targets of `samples`.
pub fn evaluate(
    model: &RelNetModel,
    samples: &[RelationalSample],
    scaling: &TargetScaling,
    prediction_day_offset: u32,
) -> Result<EvalReport, TrainError> {
    let mut y_hat = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_CHUNK) {
        y_hat.extend(model.predict(chunk)?.iter().map(|p| scaling.unscale_main(p.y_hat)));
    }
    let y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let r_squared = r_squared(&y, &y_hat)?;
    let mae = y.iter().zip(&y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    Ok(EvalReport {
        r_squared,
        mae,
        n_samples: samples.len(),
        variant: model.variant(),
        prediction_day_offset,
    })
}

/// Evaluation in the model's own target space.
pub fn evaluate_r2(model: &RelNetModel, samples: &[RelationalSample]) -> Result<EvalReport, TrainError> {
    evaluate(model, samples, &TargetScaling::identity(), 0)
}
