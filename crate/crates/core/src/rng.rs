//! Seeded random streams.
//!
//! Every random decision draws from a [`ChaCha8Rng`] whose 256-bit key is
//! `SHA-256(seed as u64 little-endian || label)`. Distinct labels give
//! independent streams from one run seed, e.g. `"split"`, `"init-pool"`,
//! `"train"`, `"strategy"`, or `"class-3"` for per-class synthesis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}
