//! Seeded Gaussian streams addressed by `(seed, step, slot)`.
//!
//! Every draw position owns its own ChaCha stream, so a trajectory does not
//! depend on the order in which draws are consumed or on how runs are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Slot of the initial state `Y_0`.
pub const SLOT_INIT: u64 = 0;
/// First Gaussian of a step (`g_{k,1}`, or the only one for DDPM).
pub const SLOT_G1: u64 = 1;
/// Second Gaussian of a step (`g_{k,3}`).
pub const SLOT_G3: u64 = 2;

const SLOTS_PER_STEP: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the start of the `(step, slot)` stream.
    pub fn generator(&self, step: u64, slot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step.wrapping_mul(SLOTS_PER_STEP).wrapping_add(slot));
        rng
    }

    pub fn fill_normals(&self, step: u64, slot: u64, out: &mut [f64]) {
        let mut rng = self.generator(step, slot);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    pub fn normals(&self, step: u64, slot: u64, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normals(step, slot, &mut v);
        v
    }
}

/// Derives an independent 64-bit seed for sub-run `index` of a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = base ^ index.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
