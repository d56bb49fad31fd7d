use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, Mode, NnError, Result};

/// Inverted dropout: training zeroes entries with probability `1 - keep_prob`
/// and scales survivors by `1 / keep_prob`; inference is the identity.
///
/// Masks come from a ChaCha stream selected by `(seed, stream)`, so two layers
/// seeded alike draw identical masks.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    keep_prob: f64,
    stream: u64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
}

impl DropoutLayer {
    pub fn new(keep_prob: f64, seed: u64, stream: u64) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(NnError::Invalid(format!(
                "dropout keep_prob must lie in (0, 1], got {keep_prob}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            keep_prob,
            stream,
            rng,
            mask: None,
        })
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    /// Restarts the mask stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(self.stream);
    }

    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Matrix {
        if mode == Mode::Infer {
            return input.clone();
        }
        if self.keep_prob == 1.0 {
            self.mask = Some(vec![1.0; input.data().len()]);
            return input.clone();
        }
        let scale = 1.0 / self.keep_prob;
        let mask: Vec<f64> = (0..input.data().len())
            .map(|_| if self.rng.gen::<f64>() < self.keep_prob { scale } else { 0.0 })
            .collect();
        let mut out = input.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        out
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let mask = self.mask.take().ok_or_else(|| NnError::MissingCache {
            layer: "dropout".into(),
        })?;
        let mut g = grad_out.clone();
        for (v, m) in g.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input() -> Matrix {
        Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -0.25]])
    }

    #[test]
    fn keep_one_is_identity_in_both_modes() {
        let mut d = DropoutLayer::new(1.0, 3, 0).unwrap();
        let x = sample_input();
        assert_eq!(d.forward(&x, Mode::Train), x);
        assert_eq!(d.forward(&x, Mode::Infer), x);
    }

    #[test]
    fn inference_is_identity() {
        let mut d = DropoutLayer::new(0.5, 3, 0).unwrap();
        let x = sample_input();
        assert_eq!(d.forward(&x, Mode::Infer), x);
    }

    #[test]
    fn training_mean_is_preserved() {
        // Monte Carlo: E[mask · x] = x.
        let mut d = DropoutLayer::new(0.7, 11, 2).unwrap();
        let draws = 100_000;
        let x = Matrix::from_vec(1, draws, vec![2.0; draws]).unwrap();
        let y = d.forward(&x, Mode::Train);
        let mean = y.data().iter().sum::<f64>() / draws as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.01, "mean {mean}");
    }

    #[test]
    fn reseed_replays_masks() {
        let mut d = DropoutLayer::new(0.5, 5, 1).unwrap();
        let x = sample_input();
        let a = d.forward(&x, Mode::Train);
        d.reseed(5);
        let b = d.forward(&x, Mode::Train);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_keep_prob_rejected() {
        assert!(DropoutLayer::new(0.0, 0, 0).is_err());
        assert!(DropoutLayer::new(1.5, 0, 0).is_err());
    }
}
