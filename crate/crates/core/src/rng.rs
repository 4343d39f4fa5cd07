//! Counter-based random streams.
//!
//! Every trial draws from its own ChaCha stream addressed by
//! `(master_seed, lane, trial_index)`, so results never depend on how trials
//! are scheduled across workers. `lane` separates independent uses of the same
//! master seed (different pairs, settings, or experiment stages).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use num_complex::Complex64;

pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub lane: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, lane: u64) -> Self {
        Self { master_seed, lane }
    }

    /// Derives a sub-lane, e.g. one per coincidence pair.
    pub fn child(self, sub: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            lane: splitmix64(self.lane ^ splitmix64(sub.wrapping_add(0x9e37_79b9))),
        }
    }

    pub fn trial(self, trial_index: u64) -> TrialRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master_seed) ^ splitmix64(!self.lane));
        rng.set_stream(trial_index);
        rng
    }
}

/// Independent master seed for sub-experiment `k` of a run seeded with `master`.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(master ^ splitmix64(k.wrapping_add(1)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Standard circularly-symmetric complex normal: independent real and
/// imaginary parts, each with variance ½.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
