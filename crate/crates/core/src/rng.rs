//! Deterministic seed management.
//!
//! A single master seed fans out into independent named streams so that
//! protocol runs are reproducible bit-for-bit regardless of how many
//! parties draw randomness. Streams are ChaCha8 instances sharing the
//! master key and differing only in the stream id, which is derived from
//! the label path by FNV-1a hashing.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// A node in the seed-derivation tree. Copy-cheap; children are derived
/// by label or index and never collide in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
    path: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree {
            master,
            path: FNV_OFFSET,
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive a child node for a named purpose ("coin", "server", ...).
    pub fn child(&self, label: &str) -> SeedTree {
        SeedTree {
            master: self.master,
            path: fnv1a(self.path, label.as_bytes()),
        }
    }

    /// Derive a child node for a trial or round index.
    pub fn child_idx(&self, index: u64) -> SeedTree {
        SeedTree {
            master: self.master,
            path: fnv1a(self.path, &index.to_le_bytes()),
        }
    }

    /// Instantiate the stream at this node.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.path);
        rng
    }
}
