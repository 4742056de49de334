//! Seeded random streams.
//!
//! Every particle owns a ChaCha8 stream keyed by `(seed, epoch, particle)`:
//! the generator is seeded with `seed` and its 64-bit stream id is
//! `(epoch << 40) | particle`. Results therefore do not depend on how
//! particles are split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest particle index representable in the stream id.
pub const MAX_PARTICLES: usize = 1 << 40;

pub fn master_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for one particle within one epoch.
pub fn particle_stream(seed: u64, epoch: usize, particle: usize) -> ChaCha8Rng {
    assert!(particle < MAX_PARTICLES, "particle index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 40) | particle as u64);
    rng
}

/// Stream for auxiliary draws (subsampling, resampling) tagged by `purpose`.
pub fn auxiliary_stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(purpose);
    rng
}
