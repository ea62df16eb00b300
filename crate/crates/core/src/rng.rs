//! Reproducible per-replica random streams.
//!
//! Every replica draws from its own ChaCha8 keystream: the 64-bit master seed
//! fills the key and the replica index selects the stream word. Different
//! `(master_seed, replica_index)` pairs never share a keystream, and the
//! numbers a replica sees do not depend on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Key of one replica's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub master_seed: u64,
    pub replica_index: u64,
}

impl RngStreamSpec {
    pub fn new(master_seed: u64, replica_index: u64) -> Self {
        Self {
            master_seed,
            replica_index,
        }
    }

    pub fn build(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        // Domain tag so a zero seed does not give the all-zero key.
        key[8..16].copy_from_slice(b"tasepLab");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replica_index);
        rng
    }
}
