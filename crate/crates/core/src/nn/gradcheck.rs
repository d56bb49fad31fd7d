//! Central finite-difference gradient checking.
//!
//! An [`Objective`] exposes a scalar loss over a parameter store together with
//! its analytic gradient. [`gradient_check`] perturbs individual coordinates by
//! `±step` and compares `(L(θ+h) − L(θ−h)) / 2h` against the analytic value.
//! Relative error is `|a − n| / max(|a|, |n|, floor)` with
//! `floor = 1e-5 · max(1, |L|)`. Central differences carry roundoff of order
//! `ε·|L|/h`, so gradients that vanish exactly (biases feeding batch norm) would
//! otherwise be compared against pure noise.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Matrix, MlpBlock, Mode, ParamTensor, Result};

const REL_FLOOR: f64 = 1e-5;

/// A deterministic scalar loss over a parameter store.
///
/// Implementations must freeze any stochasticity (dropout masks) so that
/// repeated calls at the same parameters return the same value.
pub trait Objective {
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes gradients, evaluates the loss and fills the analytic gradient.
    fn loss_and_grad(&mut self) -> Result<f64>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub tolerance: f64,
    pub non_finite: bool,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = REL_FLOOR * loss.abs().max(1.0);
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Checks every coordinate of tensors with at most `coords_per_tensor` entries,
/// and a seeded sample of `coords_per_tensor` coordinates of larger ones.
pub fn gradient_check<O: Objective + ?Sized>(
    obj: &mut O,
    step: f64,
    tolerance: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let base = obj.loss_and_grad()?;
    let analytic: Vec<(String, Vec<f64>)> = obj
        .params_mut()
        .into_iter()
        .map(|p| (p.name.clone(), p.grads.clone()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut non_finite = !base.is_finite();
    let mut params = Vec::with_capacity(analytic.len());

    for (t, (name, grads)) in analytic.iter().enumerate() {
        let len = grads.len();
        let coords: Vec<usize> = if len <= coords_per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, coords_per_tensor).into_vec()
        };
        let mut worst = (0.0f64, 0usize);
        for &k in &coords {
            let orig = obj.params_mut()[t].values[k];
            obj.params_mut()[t].values[k] = orig + step;
            let plus = obj.loss()?;
            obj.params_mut()[t].values[k] = orig - step;
            let minus = obj.loss()?;
            obj.params_mut()[t].values[k] = orig;
            if !(plus.is_finite() && minus.is_finite()) {
                non_finite = true;
                worst = (f64::INFINITY, k);
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grads[k], numeric, base);
            if err > worst.0 || err.is_nan() {
                worst = (err, k);
            }
        }
        params.push(ParamCheck {
            name: name.clone(),
            checked: coords.len(),
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }

    let (max_rel_error, worst_param) = params
        .iter()
        .fold((0.0f64, String::new()), |acc, p| {
            if p.max_rel_error > acc.0 || p.max_rel_error.is_nan() {
                (p.max_rel_error, p.name.clone())
            } else {
                acc
            }
        });
    let passed = !non_finite && max_rel_error < tolerance;
    Ok(GradCheckReport {
        params,
        max_rel_error,
        worst_param,
        tolerance,
        non_finite,
        passed,
    })
}

/// Squared error `Σ (block(input) − target)²` of a single MLP block in
/// training mode, with dropout masks replayed from a fixed seed.
pub struct BlockObjective {
    pub block: MlpBlock,
    pub input: Matrix,
    pub target: Matrix,
    pub dropout_seed: u64,
}

impl BlockObjective {
    pub fn new(block: MlpBlock, input: Matrix, target: Matrix, dropout_seed: u64) -> Self {
        Self {
            block,
            input,
            target,
            dropout_seed,
        }
    }

    fn residual(&mut self) -> Result<Matrix> {
        self.block.reseed_dropout(self.dropout_seed);
        let mut out = self.block.forward(&self.input, Mode::Train)?;
        for (o, t) in out.data_mut().iter_mut().zip(self.target.data()) {
            *o -= t;
        }
        Ok(out)
    }
}

impl Objective for BlockObjective {
    fn loss(&mut self) -> Result<f64> {
        let r = self.residual()?;
        self.block.clear_cache();
        Ok(r.data().iter().map(|v| v * v).sum())
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.block.params_mut().into_iter().for_each(ParamTensor::zero_grad);
        let r = self.residual()?;
        let loss = r.data().iter().map(|v| v * v).sum();
        let upstream = r.map(|v| 2.0 * v);
        self.block.backward(&upstream)?;
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.block.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseLayer, MlpLayer};

    fn linear_regression() -> BlockObjective {
        let dense = DenseLayer::from_parts("lin", 3, 1, &[0.5, -0.25, 0.75], &[0.1]).unwrap();
        let block = MlpBlock::from_layers("lin", vec![MlpLayer::new(dense, None, false, None)]).unwrap();
        let input = Matrix::from_rows(&[[1.0, 0.5, -0.5], [0.2, -1.0, 0.3], [-0.7, 0.4, 0.9], [0.0, 0.1, 0.2]]);
        let target = Matrix::from_rows(&[[0.3], [-0.2], [0.8], [0.05]]);
        BlockObjective::new(block, input, target, 0)
    }

    #[test]
    fn linear_regression_is_near_exact() {
        let report = gradient_check(&mut linear_regression(), 1e-3, 1e-10, 100, 0).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn zero_tolerance_fails() {
        let report = gradient_check(&mut linear_regression(), 1e-5, 0.0, 100, 0).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn non_finite_loss_is_a_failure() {
        let mut obj = linear_regression();
        obj.target = Matrix::from_rows(&[[f64::NAN], [0.0], [0.0], [0.0]]);
        let report = gradient_check(&mut obj, 1e-5, 1.0, 100, 0).unwrap();
        assert!(report.non_finite);
        assert!(!report.passed);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1.0), 0.0);
        assert!((relative_error(1.0, 1.1, 1.0) - 0.1 / 1.1).abs() < 1e-15);
        assert!(relative_error(0.0, 1e-12, 1.0) <= 1e-6);
        assert!(relative_error(0.0, 1e-9, 100.0) <= 1e-6);
    }
}
