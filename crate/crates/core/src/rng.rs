//! Seeded randomness for reproducible simulation runs.
//!
//! Every random draw in a run (keys, permutations, OTPs, nonces, corruption
//! patterns) flows from one [`SimRng`] seeded by the scenario, so a fixed seed
//! yields a byte-identical transcript.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a base seed, a label and an index.
///
/// Used to give each (scenario, cell, trial) its own stream without the
/// streams depending on execution order.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_be_bytes());
    hasher.update((label.len() as u64).to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_be_bytes());
    let digest = hasher.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(7);
        let mut b = seeded(7);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn derived_seeds_separate_labels_and_indices() {
        assert_ne!(derive_seed(1, "cell", 0), derive_seed(1, "cell", 1));
        assert_ne!(derive_seed(1, "cell", 0), derive_seed(1, "trial", 0));
        assert_eq!(derive_seed(9, "x", 3), derive_seed(9, "x", 3));
    }
}
