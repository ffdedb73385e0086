//! Seeded, portable random sampling.
//!
//! All randomness in the toolkit flows through ChaCha8 streams so that runs
//! are reproducible across platforms and crate upgrades. Index draws use
//! explicit rejection sampling on `u64` words rather than a library
//! distribution whose internals may change between versions.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Creates the generator for `seed` on stream 0.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Creates the generator for `seed` on the stream derived from `key`.
///
/// Distinct keys (e.g. segment ids) get independent streams under one run seed.
pub fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(fnv1a(key.as_bytes()));
    r
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Uniform integer in `0..bound`. `bound` must be positive.
pub fn uniform_below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0, "uniform_below: empty range");
    // Largest multiple of `bound` that fits; draws above it are rejected.
    let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % bound;
        }
    }
}

/// Draws `k` distinct indices from `0..n` with a partial Fisher-Yates
/// shuffle. The returned order is the draw order.
pub fn sample_indices<R: RngCore>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Fisher-Yates shuffle of the whole slice.
pub fn shuffle<T, R: RngCore>(rng: &mut R, items: &mut [T]) {
    let n = items.len();
    for i in 0..n.saturating_sub(1) {
        let j = i + uniform_below(rng, (n - i) as u64) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_below_stays_in_range() {
        let mut r = rng(1);
        for bound in [1u64, 2, 3, 7, 200, u64::MAX] {
            for _ in 0..100 {
                assert!(uniform_below(&mut r, bound) < bound);
            }
        }
    }

    #[test]
    fn sample_is_distinct_and_deterministic() {
        let a = sample_indices(&mut rng(9), 50, 10);
        let b = sample_indices(&mut rng(9), 50, 10);
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 10);
    }

    #[test]
    fn keyed_streams_differ() {
        let a = sample_indices(&mut keyed_rng(3, "x"), 100, 5);
        let b = sample_indices(&mut keyed_rng(3, "y"), 100, 5);
        assert_ne!(a, b);
    }

    #[test]
    fn sample_frequencies_are_roughly_uniform() {
        let n = 10;
        let mut counts = vec![0usize; n];
        let mut r = rng(42);
        let trials = 20_000;
        for _ in 0..trials {
            for i in sample_indices(&mut r, n, 3) {
                counts[i] += 1;
            }
        }
        let expected = trials as f64 * 3.0 / n as f64;
        for c in counts {
            assert!((c as f64 - expected).abs() / expected < 0.05, "{c} vs {expected}");
        }
    }
}
