//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and owns its generator;
//! independent sub-tasks derive their streams from the parent seed by a
//! fixed offset so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Complex;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream number `offset` of the family rooted at `seed`.
pub fn derived(seed: u64, offset: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(offset.wrapping_add(1));
    rng
}

/// Standard complex Gaussian: independent real and imaginary parts, each
/// with variance 1/2, so `E|z|^2 = 1`.
pub fn complex_normal(rng: &mut Rng) -> Complex {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}
