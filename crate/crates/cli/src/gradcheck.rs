use relnet_core::model::{ModelConfig, ModelObjective, RelNetModel, RelationalSample, RnMode, Variant};
use relnet_core::nn::gradcheck::BlockObjective;
use relnet_core::nn::{gradient_check, GradCheckReport, LayerSpec, Matrix, MlpBlock, ParamTensor};

use crate::error::CliError;

pub const STEP: f64 = 1e-5;
const COORDS_PER_TENSOR: usize = 100;
const BATCH: usize = 4;

/// Deterministic values in roughly `[-1, 1]`, varied enough to keep ReLUs off
/// their kinks.
fn wobble(i: usize, salt: f64) -> f64 {
    ((i as f64 + 1.0) * 12.9898 + salt * 78.233).sin()
}

fn jitter(params: Vec<&mut ParamTensor>) {
    for p in params {
        if p.name.ends_with("bias") || p.name.ends_with("beta") {
            for (i, v) in p.values.iter_mut().enumerate() {
                *v = 0.05 + 0.25 * wobble(i, p.name.len() as f64).abs();
            }
        }
    }
}

fn matrix(rows: usize, cols: usize, salt: f64) -> Result<Matrix, CliError> {
    Ok(Matrix::from_vec(rows, cols, (0..rows * cols).map(|i| wobble(i, salt)).collect())?)
}

fn block_check(name: &str, specs: &[LayerSpec], tolerance: f64) -> Result<GradCheckReport, CliError> {
    let mut rng = relnet_core::nn::seeded_rng(11);
    let mut block = MlpBlock::build(name, 5, specs, &mut rng, 3)?;
    jitter(block.params_mut());
    let out = block.out_dim();
    let mut obj = BlockObjective::new(block, matrix(BATCH, 5, 1.0)?, matrix(BATCH, out, 2.0)?, 3);
    Ok(gradient_check(&mut obj, STEP, tolerance, COORDS_PER_TENSOR, 0)?)
}

fn model_check(rn_mode: RnMode, tolerance: f64) -> Result<GradCheckReport, CliError> {
    let config = ModelConfig {
        input_dim: 6,
        n_related: 2,
        encoder_depth: 3,
        encoder_width: 8,
        repr_dim: 4,
        relation_depth: 2,
        relation_width: 6,
        aggregate_depth: 2,
        aggregate_width: 5,
        head_depth: 2,
        head_width: 4,
        lambda_aux: 0.7,
        gamma_l2: 1e-3,
        dropout_keep: 0.9,
        variant: Variant::DnnRnMtl,
        rn_mode,
        init_seed: 5,
        ..ModelConfig::default()
    };
    let mut model = RelNetModel::build(config)?;
    jitter(model.params_mut());
    let batch: Vec<RelationalSample> = (0..BATCH)
        .map(|b| {
            let vec = |salt: f64| (0..6).map(|i| wobble(i + 7 * b, salt)).collect::<Vec<f64>>();
            RelationalSample {
                x: vec(3.0),
                related: vec![vec(4.0), vec(5.0)],
                y: wobble(b, 6.0),
                y_aux: wobble(b, 7.0),
            }
        })
        .collect();
    let mut obj = ModelObjective {
        model: &mut model,
        batch: &batch,
        dropout_seed: 9,
    };
    Ok(gradient_check(&mut obj, STEP, tolerance, COORDS_PER_TENSOR, 0)?)
}

/// Runs the checks selected by `layer` and returns `(check name, report)`.
pub fn run(layer: &str, tolerance: f64) -> Result<Vec<(String, GradCheckReport)>, CliError> {
    let bn = LayerSpec {
        batch_norm: true,
        ..LayerSpec::relu(4)
    };
    let dropout = LayerSpec {
        keep_prob: Some(0.8),
        ..LayerSpec::relu(4)
    };
    let mut out = Vec::new();
    let wants = |name: &str| layer == "all" || layer == name;
    if wants("dense") {
        out.push(("dense".to_string(), block_check("dense", &[LayerSpec::linear(3)], tolerance)?));
    }
    if wants("relu") {
        let specs = [LayerSpec::relu(4), LayerSpec::linear(2)];
        out.push(("relu".to_string(), block_check("relu", &specs, tolerance)?));
    }
    if wants("batchnorm") {
        out.push(("batchnorm".to_string(), block_check("batchnorm", &[bn, LayerSpec::linear(2)], tolerance)?));
    }
    if wants("dropout") {
        out.push(("dropout".to_string(), block_check("dropout", &[dropout, LayerSpec::linear(2)], tolerance)?));
    }
    if wants("model") {
        out.push(("model (anchored)".to_string(), model_check(RnMode::Anchored, tolerance)?));
        out.push(("model (all pairs)".to_string(), model_check(RnMode::AllPairs, tolerance)?));
    }
    Ok(out)
}
