//! Reproducible random streams derived from a master seed.
//!
//! Each stream is keyed by a fixed purpose label and a list of indices
//! (cycle, member, ...), so switching one component on or off never shifts
//! another component's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const PRIOR: &str = "prior-sampling";
pub const RESAMPLE: &str = "resampling";
pub const OBS_PERTURBATION: &str = "obs-perturbation";
pub const OBS_GENERATION: &str = "obs-generation";
pub const EXTENT_GENERATION: &str = "extent-generation";
pub const EXCLUSION_PLACEMENT: &str = "exclusion-placement";

/// Seed bytes for `(master, label, indices)`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn stream(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, label, indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, PRIOR, &[1, 2]).gen();
        let b: u64 = stream(7, PRIOR, &[1, 2]).gen();
        let c: u64 = stream(7, PRIOR, &[1, 3]).gen();
        let d: u64 = stream(7, RESAMPLE, &[1, 2]).gen();
        let e: u64 = stream(8, PRIOR, &[1, 2]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
