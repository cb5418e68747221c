//! Seed derivation. Every stochastic component takes its own stream so that
//! results do not depend on scheduling or on how many other streams exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of stream labels.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(seed), |acc, &l| mix64(acc ^ mix64(l)))
}

/// Stable hash of a string label, for naming streams.
pub fn label(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, labels))
}

/// Stream keyed by a textual component name and numeric indices.
pub fn named(seed: u64, name: &str, idx: &[u64]) -> Rng {
    let mut l = vec![label(name)];
    l.extend_from_slice(idx);
    stream(seed, &l)
}

/// Float reinterpreted for hashing grid coordinates such as δ.
pub fn fkey(x: f64) -> u64 {
    x.to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = named(7, "init", &[1]).gen();
        let b: f64 = named(7, "init", &[1]).gen();
        let c: f64 = named(7, "init", &[2]).gen();
        let d: f64 = named(8, "init", &[1]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn label_order_matters() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
    }
}
