//! Seed derivation: all randomness flows from one master seed; module-level
//! seeds are derived as the first 8 bytes of SHA-256(master_seed_le || role).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed for `role` ("synth", "split", "fold-3", ...).
pub fn derive_seed(master: u64, role: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(role.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn rng_for(master: u64, role: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, role))
}
