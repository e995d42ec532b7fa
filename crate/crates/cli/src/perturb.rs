//! Seeded uniform sampling in a Euclidean ball.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Uniform sample from the open ball of `radius` in `ℝ^dim`: a Gaussian
/// direction scaled by `radius · U^{1/dim}`.
pub fn sample_ball(dim: usize, radius: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dir = loop {
        let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let n: f64 = g.norm();
        if n > 0.0 {
            break g / n;
        }
    };
    let u: f64 = Uniform::new(0.0, 1.0)
        .expect("valid range")
        .sample(&mut rng);
    dir * (radius * u.powf(1.0 / dim as f64))
}

/// Seeded unit-norm vector with zero block mean, for observer estimates.
pub fn sample_centered_direction(n: usize, d: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let g: DVector<f64> = DVector::from_fn(n * d, |_, _| StandardNormal.sample(&mut rng));
        let c = bearing_forms::linalg::remove_block_mean(&g, d);
        let norm = c.norm();
        if norm > 1e-12 {
            return c / norm;
        }
    }
}
