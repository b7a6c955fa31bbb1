//! Seed plumbing.
//!
//! Every random decision in a run is drawn from a ChaCha8 stream addressed by
//! a master seed plus a path of indices (realization, agent, ...). Streams are
//! independent of scheduling, so parallel execution reproduces sequential
//! output exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Child seed for the given index path.
    pub fn derive(self, path: &[u64]) -> RngSeed {
        let mut state = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        for &p in path {
            state = splitmix64(state ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        RngSeed(state)
    }

    /// Generator for this seed on stream 0.
    pub fn rng(self) -> SimRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Generator for one stream of this seed, e.g. one agent of a realization.
    pub fn stream(self, stream: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
