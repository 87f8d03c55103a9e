//! Counter-based random streams.
//!
//! Trial `t` of a run draws its index from stream `t` of the index key and its
//! summands from stream `t` of the summand key. Both keys are derived from one
//! user seed, so results do not depend on how trials are spread over threads,
//! and the two lanes can be reseeded independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const INDEX_LANE: u64 = 0x1d8e_4e27_c47d_124f;
const SUMMAND_LANE: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keys for the index lane and the summand lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSeeds {
    pub index: u64,
    pub summand: u64,
}

impl SimulationSeeds {
    pub fn from_seed(seed: u64) -> Self {
        SimulationSeeds { index: splitmix64(seed ^ INDEX_LANE), summand: splitmix64(seed ^ SUMMAND_LANE) }
    }
}

/// Per-trial stream factory for one key.
#[derive(Debug, Clone)]
pub struct StreamFamily {
    base: ChaCha8Rng,
}

impl StreamFamily {
    pub fn new(key: u64) -> Self {
        StreamFamily { base: ChaCha8Rng::seed_from_u64(key) }
    }

    /// Fresh generator for trial `t`.
    pub fn stream(&self, t: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(t);
        rng.set_word_pos(0);
        rng
    }
}
