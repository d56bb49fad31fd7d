use super::{Matrix, Mode, NnError, ParamTensor, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_STAT_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization.
///
/// Training mode normalizes with the (biased) batch mean and variance and folds
/// them into the running statistics with
/// `running = (1 - m) * running + m * batch_stat`. Inference mode reads the
/// running statistics only.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub stat_momentum: f64,
    name: String,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: ParamTensor::filled(format!("{name}.gamma"), &[dim], 1.0, false),
            beta: ParamTensor::zeros(format!("{name}.beta"), &[dim], false),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon: DEFAULT_EPSILON,
            stat_momentum: DEFAULT_STAT_MOMENTUM,
            name: name.to_string(),
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.dim() {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                expected: self.dim(),
                actual: input.cols(),
            });
        }
        Ok(())
    }

    /// Inference-mode transform using running statistics.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        self.check(input)?;
        let scale: Vec<f64> = self
            .running_var
            .iter()
            .zip(&self.gamma.values)
            .map(|(&v, &g)| g / (v + self.epsilon).sqrt())
            .collect();
        let mut out = input.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.running_mean[c]) * scale[c] + self.beta.values[c];
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Infer {
            return self.apply(input);
        }
        self.check(input)?;
        let rows = input.rows();
        if rows < 2 {
            return Err(NnError::BatchTooSmall {
                layer: self.name.clone(),
                rows,
            });
        }
        let dim = self.dim();
        let n = rows as f64;
        let mean: Vec<f64> = input.sum_rows().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; dim];
        for r in 0..rows {
            for (c, &v) in input.row(r).iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut normalized = input.clone();
        let mut out = Matrix::zeros(rows, dim);
        for r in 0..rows {
            let xh = normalized.row_mut(r);
            for c in 0..dim {
                xh[c] = (xh[c] - mean[c]) * inv_std[c];
            }
            let xh = normalized.row(r);
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = self.gamma.values[c] * xh[c] + self.beta.values[c];
            }
        }

        let m = self.stat_momentum;
        for c in 0..dim {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * var[c];
        }
        self.cache = Some(BnCache { normalized, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let BnCache { normalized, inv_std } = self.cache.take().ok_or_else(|| NnError::MissingCache {
            layer: self.name.clone(),
        })?;
        let rows = normalized.rows();
        let dim = self.dim();
        let n = rows as f64;

        // Σ dy and Σ dy·x̂ per feature.
        let mut sum_g = vec![0.0; dim];
        let mut sum_gx = vec![0.0; dim];
        for r in 0..rows {
            let g = grad_out.row(r);
            let xh = normalized.row(r);
            for c in 0..dim {
                sum_g[c] += g[c];
                sum_gx[c] += g[c] * xh[c];
            }
        }
        for c in 0..dim {
            self.beta.grads[c] += sum_g[c];
            self.gamma.grads[c] += sum_gx[c];
        }

        let mut grad_in = Matrix::zeros(rows, dim);
        for r in 0..rows {
            let g = grad_out.row(r);
            let xh = normalized.row(r);
            for (c, d) in grad_in.row_mut(r).iter_mut().enumerate() {
                let k = self.gamma.values[c] * inv_std[c] / n;
                *d = k * (n * g[c] - sum_g[c] - xh[c] * sum_gx[c]);
            }
        }
        Ok(grad_in)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
