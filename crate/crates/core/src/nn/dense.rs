use rand::Rng;

use super::init::he_normal;
use super::{Matrix, NnError, ParamTensor, Result};

/// Affine map `y = x·W + b` with `W` stored row-major as `[in_dim, out_dim]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: ParamTensor,
    pub bias: ParamTensor,
    name: String,
    cache: Option<Matrix>,
}

impl DenseLayer {
    /// Zero-initialized layer.
    pub fn zeros(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: ParamTensor::zeros(format!("{name}.weight"), &[in_dim, out_dim], true),
            bias: ParamTensor::zeros(format!("{name}.bias"), &[out_dim], false),
            name: name.to_string(),
            cache: None,
        }
    }

    /// He-normal weights, zero bias.
    pub fn he<R: Rng + ?Sized>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(name, in_dim, out_dim);
        layer.weights.values = he_normal(in_dim, in_dim * out_dim, rng);
        layer
    }

    pub fn from_parts(name: &str, in_dim: usize, out_dim: usize, weights: &[f64], bias: &[f64]) -> Result<Self> {
        let mut layer = Self::zeros(name, in_dim, out_dim);
        layer.weights.assign(weights)?;
        layer.bias.assign(bias)?;
        Ok(layer)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape[1]
    }

    fn check(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.in_dim() {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                expected: self.in_dim(),
                actual: input.cols(),
            });
        }
        Ok(())
    }

    /// Pure forward pass; no caching.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        self.check(input)?;
        let mut out = input.matmul(&self.weights.values, self.out_dim());
        let b = &self.bias.values;
        for r in 0..out.rows() {
            for (v, &bv) in out.row_mut(r).iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(out)
    }

    /// Forward pass that keeps the input for [`DenseLayer::backward`].
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = self.apply(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    /// Consumes the cached input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let input = self.cache.take().ok_or_else(|| NnError::MissingCache {
            layer: self.name.clone(),
        })?;
        if grad_out.cols() != self.out_dim() || grad_out.rows() != input.rows() {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                expected: self.out_dim(),
                actual: grad_out.cols(),
            });
        }
        input.accumulate_transpose_matmul(grad_out, &mut self.weights.grads);
        for (g, s) in self.bias.grads.iter_mut().zip(grad_out.sum_rows()) {
            *g += s;
        }
        Ok(grad_out.matmul_transposed(&self.weights.values, self.in_dim()))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let layer = DenseLayer::from_parts("d", 2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap();
        let y = layer.apply(&Matrix::from_rows(&[[3.0, -1.0]])).unwrap();
        assert_eq!(y.row(0), &[3.0, -1.0]);
    }

    #[test]
    fn affine_map_uses_in_out_layout() {
        // x·W + b = [1·1 + 1·3 + 1, 1·2 + 1·4 + 1]
        let layer = DenseLayer::from_parts("d", 2, 2, &[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0]).unwrap();
        let y = layer.apply(&Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(y.row(0), &[5.0, 7.0]);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let layer = DenseLayer::from_parts("d", 3, 1, &[0.0; 3], &[5.0]).unwrap();
        let y = layer.apply(&Matrix::from_rows(&[[0.3, -7.0, 11.0]])).unwrap();
        assert_eq!(y.row(0), &[5.0]);
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let mut layer = DenseLayer::zeros("encoder.0", 3, 2);
        let err = layer.forward(&Matrix::zeros(1, 4)).unwrap_err();
        assert!(err.to_string().contains("encoder.0"));
    }

    #[test]
    fn backward_requires_forward() {
        let mut layer = DenseLayer::zeros("d", 1, 1);
        assert!(matches!(
            layer.backward(&Matrix::zeros(1, 1)),
            Err(NnError::MissingCache { .. })
        ));
    }
}
