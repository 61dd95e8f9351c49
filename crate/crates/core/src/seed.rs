//! Seed derivation.
//!
//! Every random stream in the crate comes from one master seed. Sub-streams
//! are addressed by a text label: the sub-seed is the first eight bytes
//! (little endian) of `SHA-256(master_seed.to_le_bytes() || label)`.
//! Labels in use: `"cv-fold"`, `"lasso-cv-propensity"`, `"lasso-cv-prognostic"`,
//! `"bootstrap-{b}"`, `"resample"`, `"trial-{t}"`, `"coefficients"`, `"data"`.
//!
//! Streams are ChaCha8 ([`rand_chacha::ChaCha8Rng`]), a counter-based generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labeled_rng(master: u64, label: &str) -> Rng {
    rng_from(derive_seed(master, label))
}
