use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Uniform fan-in initialisation bound is `INIT_GAIN / sqrt(fan_in)`.
/// `sqrt(6)` is the He-uniform constant for relu networks.
pub const INIT_GAIN: f64 = 2.449_489_742_783_178;

pub(crate) fn he_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = INIT_GAIN / math::sqrt(fan_in.max(1) as f64);
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}
