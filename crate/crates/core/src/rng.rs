//! Deterministic, platform-independent random-stream derivation.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream whose
//! 64-bit seed is derived from the run's base seed plus a list of integer
//! tags (iteration, interval, output dimension, purpose code, ...) via
//! SplitMix64 mixing. Identical (base seed, tags) always yields the same
//! stream on any platform, and distinct tag lists yield independent
//! streams for all practical purposes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a bijective 64-bit mix with good avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tags` into `base_seed`, one SplitMix64 round per tag.
pub fn derive_seed(base_seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base_seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// A seeded ChaCha8 stream for the given (base seed, tags) pair.
pub fn derived_rng(base_seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_inputs_same_stream() {
        let a: Vec<u64> = derived_rng(7, &[1, 2])
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        let b: Vec<u64> = derived_rng(7, &[1, 2])
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_tags_distinct_streams() {
        let a: u64 = derived_rng(7, &[1, 2]).gen();
        let b: u64 = derived_rng(7, &[2, 1]).gen();
        let c: u64 = derived_rng(7, &[1]).gen();
        let d: u64 = derived_rng(8, &[1]).gen();
        assert_ne!(a, b, "tag order must matter");
        assert_ne!(a, c);
        assert_ne!(c, d, "base seed must matter");
    }

    #[test]
    fn seed_derivation_is_frozen() {
        // Pinned values: changing the mixing scheme silently would break
        // reproducibility of published run outputs.
        assert_eq!(derive_seed(0, &[]), 16294208416658607535);
        assert_eq!(splitmix64(1), 10451216379200822465);
        assert_eq!(derive_seed(42, &[3, 1]), 12628376503779542867);
    }
}
