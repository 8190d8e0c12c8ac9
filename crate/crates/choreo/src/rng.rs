//! Seeding and deterministic random streams.
//!
//! Every stochastic stage of the engine draws from a [`ChaCha8Rng`] seeded
//! either directly or through [`derive_seed`], so a run is a pure function
//! of its root seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Child-seed derivation for concurrent units of work.
///
/// `child = first 8 bytes (little-endian) of SHA-256(root || segment || window)`
/// with all three inputs encoded as little-endian u64. The construction is
/// fixed: manifests record only the root seed, and re-running any subset of
/// windows reproduces identical bytes.
pub fn derive_seed(root_seed: u64, segment: u64, window: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(segment.to_le_bytes());
    hasher.update(window.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seed reserved for a segment's global (key-motion) stage, distinct from
/// every local window seed of the same segment.
pub const GLOBAL_STAGE_WINDOW: u64 = u64::MAX;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable() {
        // Frozen: a change here silently breaks manifest reproducibility.
        assert_eq!(derive_seed(0, 0, 0), 0xde56_b2b6_cf8e_909d);
        assert_eq!(derive_seed(7, 1, 2), derive_seed(7, 1, 2));
    }

    #[test]
    fn derive_seed_separates_streams() {
        let root = 42;
        let a = derive_seed(root, 0, 0);
        let b = derive_seed(root, 0, 1);
        let c = derive_seed(root, 1, 0);
        let g = derive_seed(root, 0, GLOBAL_STAGE_WINDOW);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        assert_ne!(g, a);
    }
}
