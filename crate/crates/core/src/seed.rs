//! Per-stage seed derivation from one global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for `stage` from the global seed.
///
/// The seed is the first eight bytes (little endian) of
/// `SHA-256(stage || ":" || global_seed_le)`.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update(b":");
    hasher.update(global.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Generator for one named stage.
pub fn stage_rng(global: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, stage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_are_isolated() {
        assert_eq!(derive_seed(7, "label"), derive_seed(7, "label"));
        assert_ne!(derive_seed(7, "label"), derive_seed(7, "train"));
        assert_ne!(derive_seed(7, "label"), derive_seed(8, "label"));
    }
}
