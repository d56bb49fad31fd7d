use rand::Rng;

use super::{relu, relu_backward, BatchNormLayer, DenseLayer, DropoutLayer, Matrix, Mode, NnError, ParamTensor, Result};

/// Shape of one MLP layer: `dense → [batch norm] → [ReLU] → [dropout]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub batch_norm: bool,
    pub relu: bool,
    pub keep_prob: Option<f64>,
}

impl LayerSpec {
    pub fn linear(out_dim: usize) -> Self {
        Self {
            out_dim,
            batch_norm: false,
            relu: false,
            keep_prob: None,
        }
    }

    pub fn relu(out_dim: usize) -> Self {
        Self {
            relu: true,
            ..Self::linear(out_dim)
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub dense: DenseLayer,
    pub batch_norm: Option<BatchNormLayer>,
    pub relu: bool,
    pub dropout: Option<DropoutLayer>,
    relu_input: Option<Matrix>,
}

impl MlpLayer {
    pub fn new(dense: DenseLayer, batch_norm: Option<BatchNormLayer>, relu: bool, dropout: Option<DropoutLayer>) -> Self {
        Self {
            dense,
            batch_norm,
            relu,
            dropout,
            relu_input: None,
        }
    }

    fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut h = self.dense.apply(input)?;
        if let Some(bn) = &self.batch_norm {
            h = bn.apply(&h)?;
        }
        if self.relu {
            h = relu(&h);
        }
        Ok(h)
    }

    fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        let mut h = self.dense.forward(input)?;
        if let Some(bn) = &mut self.batch_norm {
            h = bn.forward(&h, mode)?;
        }
        if self.relu {
            let out = relu(&h);
            self.relu_input = Some(h);
            h = out;
        }
        if let Some(d) = &mut self.dropout {
            h = d.forward(&h, mode);
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let mut g = match &mut self.dropout {
            Some(d) => d.backward(grad)?,
            None => grad.clone(),
        };
        if self.relu {
            let pre = self.relu_input.take().ok_or_else(|| NnError::MissingCache {
                layer: self.dense.name().to_string(),
            })?;
            g = relu_backward(&pre, &g);
        }
        if let Some(bn) = &mut self.batch_norm {
            g = bn.backward(&g)?;
        }
        self.dense.backward(&g)
    }

    fn clear_cache(&mut self) {
        self.relu_input = None;
        self.dense.clear_cache();
        if let Some(bn) = &mut self.batch_norm {
            bn.clear_cache();
        }
        if let Some(d) = &mut self.dropout {
            d.clear_cache();
        }
    }
}

/// A sequential stack of [`MlpLayer`]s.
#[derive(Debug, Clone)]
pub struct MlpBlock {
    name: String,
    layers: Vec<MlpLayer>,
    /// Set by a training forward, cleared by backward.
    primed: bool,
}

impl MlpBlock {
    /// Builds a block from layer specs with He-normal weights drawn from `rng`.
    /// Dropout layer `k` uses mask stream `k` of `dropout_seed`.
    pub fn build<R: Rng + ?Sized>(
        name: &str,
        in_dim: usize,
        specs: &[LayerSpec],
        rng: &mut R,
        dropout_seed: u64,
    ) -> Result<Self> {
        if in_dim == 0 || specs.iter().any(|s| s.out_dim == 0) {
            return Err(NnError::Invalid(format!("{name}: layer widths must be positive")));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = in_dim;
        for (k, spec) in specs.iter().enumerate() {
            let lname = format!("{name}.{k}");
            let dense = DenseLayer::he(&lname, width, spec.out_dim, rng);
            let bn = spec
                .batch_norm
                .then(|| BatchNormLayer::new(&format!("{lname}.bn"), spec.out_dim));
            let dropout = match spec.keep_prob {
                Some(p) if p < 1.0 => Some(DropoutLayer::new(p, dropout_seed, k as u64)?),
                Some(p) if p > 1.0 || p.is_nan() => {
                    return Err(NnError::Invalid(format!("{lname}: keep_prob {p} outside (0, 1]")))
                }
                _ => None,
            };
            layers.push(MlpLayer::new(dense, bn, spec.relu, dropout));
            width = spec.out_dim;
        }
        Self::from_layers(name, layers)
    }

    /// Assembles a block, checking that adjacent widths chain.
    pub fn from_layers(name: &str, layers: Vec<MlpLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::Invalid(format!("{name}: an MLP needs at least one layer")));
        }
        for pair in layers.windows(2) {
            if pair[0].dense.out_dim() != pair[1].dense.in_dim() {
                return Err(NnError::ShapeMismatch {
                    layer: pair[1].dense.name().to_string(),
                    expected: pair[0].dense.out_dim(),
                    actual: pair[1].dense.in_dim(),
                });
            }
        }
        Ok(Self {
            name: name.to_string(),
            layers,
            primed: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [MlpLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].dense.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].dense.out_dim()
    }

    /// Pure inference-mode forward.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut h = self.layers[0].infer(input)?;
        for layer in &self.layers[1..] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Training mode caches for [`MlpBlock::backward`] and updates batch-norm
    /// running statistics; inference mode is [`MlpBlock::infer`].
    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Infer {
            return self.infer(input);
        }
        self.primed = false;
        let mut h = input.clone();
        for layer in &mut self.layers {
            match layer.forward(&h, mode) {
                Ok(out) => h = out,
                Err(e) => {
                    self.clear_cache();
                    return Err(e);
                }
            }
        }
        self.primed = true;
        Ok(h)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        if !self.primed {
            return Err(NnError::MissingCache {
                layer: self.name.clone(),
            });
        }
        self.primed = false;
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.primed = false;
        self.layers.iter_mut().for_each(MlpLayer::clear_cache);
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        for layer in &mut self.layers {
            if let Some(d) = &mut layer.dropout {
                d.reseed(seed);
            }
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.dense.weights);
            out.push(&layer.dense.bias);
            if let Some(bn) = &layer.batch_norm {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.dense.weights);
            out.push(&mut layer.dense.bias);
            if let Some(bn) = &mut layer.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNormLayer> {
        self.layers.iter().filter_map(|l| l.batch_norm.as_ref())
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNormLayer> {
        self.layers.iter_mut().filter_map(|l| l.batch_norm.as_mut())
    }
}
