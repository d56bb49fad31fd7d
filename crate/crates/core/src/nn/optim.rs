use super::{NnError, ParamTensor, Result};

/// `gamma · Σθ²` over tensors flagged for decay (dense weights).
pub fn l2_penalty<'a>(params: impl IntoIterator<Item = &'a ParamTensor>, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    gamma
        * params
            .into_iter()
            .filter(|p| p.decay)
            .flat_map(|p| p.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
}

/// Adds the penalty gradient `2γθ` to every decayed tensor's gradient buffer.
pub fn l2_grad<'a>(params: impl IntoIterator<Item = &'a mut ParamTensor>, gamma: f64) {
    if gamma == 0.0 {
        return;
    }
    for p in params.into_iter().filter(|p| p.decay) {
        for (g, &v) in p.grads.iter_mut().zip(&p.values) {
            *g += 2.0 * gamma * v;
        }
    }
}

/// Heavy-ball momentum: `v ← μv − η·g`, `θ ← θ + v`.
///
/// The ℓ2 gradient is folded in here rather than in backward, so data-loss
/// gradients stay untouched by regularization.
#[derive(Debug, Clone)]
pub struct MomentumOptimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_gamma: f64,
    velocity: Vec<(String, Vec<f64>)>,
}

impl MomentumOptimizer {
    pub fn new(learning_rate: f64, momentum: f64, l2_gamma: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(NnError::Invalid(format!("learning rate must be >= 0, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NnError::Invalid(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(l2_gamma >= 0.0 && l2_gamma.is_finite()) {
            return Err(NnError::Invalid(format!("l2 gamma must be >= 0, got {l2_gamma}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            l2_gamma,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self, name: &str) -> Option<&[f64]> {
        self.velocity
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Applies one update and zeroes the gradients.
    pub fn step(&mut self, mut params: Vec<&mut ParamTensor>) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params
                .iter()
                .map(|p| (p.name.clone(), vec![0.0; p.len()]))
                .collect();
        }
        if self.velocity.len() != params.len() {
            let name = params.first().map_or_else(String::new, |p| p.name.clone());
            return Err(NnError::OptimizerMismatch { name });
        }
        for (p, (name, _)) in params.iter().zip(&self.velocity) {
            if &p.name != name {
                return Err(NnError::OptimizerMismatch { name: p.name.clone() });
            }
        }
        for (p, (_, vel)) in params.iter_mut().zip(self.velocity.iter_mut()) {
            if vel.len() != p.len() {
                return Err(NnError::OptimizerMismatch { name: p.name.clone() });
            }
            let decay = if p.decay { 2.0 * self.l2_gamma } else { 0.0 };
            let ParamTensor { values, grads, .. } = &mut **p;
            for ((theta, g), v) in values.iter_mut().zip(grads.iter_mut()).zip(vel.iter_mut()) {
                let grad = if decay != 0.0 { *g + decay * *theta } else { *g };
                *v = self.momentum * *v - self.learning_rate * grad;
                if *v != 0.0 {
                    *theta += *v;
                }
                *g = 0.0;
            }
        }
        Ok(())
    }
}
