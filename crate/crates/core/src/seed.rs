//! Seed derivation and content digests.
//!
//! Every stochastic stage draws from a ChaCha8 stream seeded from a 64-bit
//! value. Child seeds are derived by hashing the parent seed together with a
//! label, so per-target and per-replicate streams do not depend on iteration
//! order or thread scheduling.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from `seed` and a textual label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([0u8]);
    h.update(label.as_bytes());
    let out = h.finalize();
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&out[..8]);
    u64::from_le_bytes(buf)
}

pub fn derive_seed_indexed(seed: u64, label: &str, index: usize) -> u64 {
    derive_seed(seed, &format!("{label}#{index}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
