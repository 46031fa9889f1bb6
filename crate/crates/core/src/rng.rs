//! Reproducible random streams.
//!
//! Every replication draws from its own ChaCha8 stream, keyed by the master
//! seed and selected by the replication index, so results do not depend on
//! which thread runs which replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type RandomStream = ChaCha8Rng;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedMaterial {
    pub master_seed: u64,
    pub stream: u64,
}

impl SeedMaterial {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self { master_seed, stream }
    }

    pub fn rng(&self) -> RandomStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream);
        rng
    }
}
