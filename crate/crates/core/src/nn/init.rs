use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Seeded ChaCha generator, as used for initialization.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// He-normal draws: zero mean, standard deviation `sqrt(2 / fan_in)`.
pub fn he_normal<R: Rng + ?Sized>(fan_in: usize, count: usize, rng: &mut R) -> Vec<f64> {
    assert!(fan_in > 0, "fan_in must be positive");
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..count).map(|_| dist.sample(rng)).collect()
}
