//! Deterministic random streams.
//!
//! Every stream is addressed by `(master seed, replication, lane)`. The master
//! seed and lane select the ChaCha key; the replication index selects the
//! ChaCha stream, so replications never overlap and can run in any order.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Well-known lanes. Extension streams for individual keys start at
/// [`lane::KEY_EXTENSION`] and add the key index.
pub mod lane {
    pub const SEEDS: u64 = 0;
    pub const PIVOTS: u64 = 1;
    pub const LIMIT: u64 = 2;
    pub const DICKMAN: u64 = 3;
    pub const RANDOM_PIVOT: u64 = 4;
    pub const CHAIN: u64 = 5;
    pub const KEY_EXTENSION: u64 = 1 << 32;
}

/// Identifies one replication of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct StreamLabel {
    pub master: u64,
    pub rep: u64,
}

impl StreamLabel {
    pub fn new(master: u64, rep: u64) -> Self {
        StreamLabel { master, rep }
    }

    pub fn rng(&self, lane: u64) -> StreamRng {
        stream(self.master, self.rep, lane)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(master: u64, rep: u64, lane: u64) -> StreamRng {
    let mut state = master ^ lane.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep);
    rng
}

/// Uniform draw from the open interval (0, 1).
#[inline]
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Uniform draw from the open interval (lower, upper). Falls back to the
/// midpoint if rounding lands on an endpoint.
pub fn uniform_between<R: Rng + ?Sized>(rng: &mut R, lower: f64, upper: f64) -> f64 {
    let v = lower + (upper - lower) * open01(rng);
    if v > lower && v < upper {
        v
    } else {
        0.5 * (lower + upper)
    }
}
