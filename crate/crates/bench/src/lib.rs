//! Shared inputs for the benchmarks.

use ipsrf::DiscreteMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` atoms uniform in the unit cube with positive random weights.
pub fn random_measure(seed: u64, n: usize, dim: usize) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let weights = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    DiscreteMeasure::new(dim, points, weights).expect("valid measure")
}
