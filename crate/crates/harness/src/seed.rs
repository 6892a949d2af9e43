//! Counter-based seed derivation: every random stream in an experiment is a
//! pure function of the root seed and a short path of labels, so any trial
//! can be replayed on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used under the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Training = 1,
    Trial = 2,
    Calibration = 3,
    Test = 4,
    Perturbation = 5,
    Logging = 6,
    Model = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng_for(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derivation_is_stable_and_spread() {
        assert_eq!(derive_seed(7, &[2, 3]), derive_seed(7, &[2, 3]));
        let seeds: HashSet<u64> = (0..1000).map(|t| derive_seed(7, &[Stream::Trial as u64, t])).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(7, &[2, 3]), derive_seed(7, &[3, 2]));
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }
}
