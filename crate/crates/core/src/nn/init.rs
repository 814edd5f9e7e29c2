use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::DenseMatrix;

pub(crate) fn glorot_from_rng(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
}

/// Glorot-uniform `fan_in × fan_out` matrix, deterministic per seed.
pub fn glorot_init(fan_in: usize, fan_out: usize, seed: u64) -> DenseMatrix {
    glorot_from_rng(&mut ChaCha8Rng::seed_from_u64(seed), fan_in, fan_out)
}
