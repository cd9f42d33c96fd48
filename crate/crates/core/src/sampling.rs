//! Seeded uniform subsampling shared by the model-fitting stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pick `cap` of `n` indices uniformly at random (seeded), sorted ascending.
/// Returns `None` when no subsampling is needed.
pub(crate) fn subsample_indices(n: usize, cap: usize, seed: u64) -> Option<Vec<usize>> {
    if cap == 0 || n <= cap {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    picked.sort_unstable();
    Some(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_subsample_when_under_cap() {
        assert!(subsample_indices(10, 10, 1).is_none());
        assert!(subsample_indices(10, 0, 1).is_none());
    }

    #[test]
    fn deterministic_and_unique() {
        let a = subsample_indices(1000, 100, 7).unwrap();
        let b = subsample_indices(1000, 100, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(*a.last().unwrap() < 1000);
        let c = subsample_indices(1000, 100, 8).unwrap();
        assert_ne!(a, c);
    }
}
