//! Slow, direct reference implementations for cross-checking the metrics
//! and sampling code. Nothing here shares code with `mtpe`.

use std::collections::{HashMap, HashSet};

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Every sequence reachable from `seq` by moving one contiguous block to
/// another position.
fn block_moves<T: Clone>(seq: &[T]) -> Vec<Vec<T>> {
    let n = seq.len();
    let mut out = Vec::new();
    for start in 0..n {
        for end in start + 1..=n {
            let block = &seq[start..end];
            let mut rest: Vec<T> = seq[..start].to_vec();
            rest.extend_from_slice(&seq[end..]);
            for pos in 0..=rest.len() {
                if pos == start {
                    continue;
                }
                let mut v = rest[..pos].to_vec();
                v.extend_from_slice(block);
                v.extend_from_slice(&rest[pos..]);
                out.push(v);
            }
        }
    }
    out
}

/// Exact minimum of (block moves + Levenshtein distance) over all move
/// sequences, by breadth-first search over move counts. Exponential; keep
/// inputs short.
pub fn brute_force_ter_edits<T: Clone + Eq + std::hash::Hash>(hyp: &[T], reference: &[T]) -> usize {
    let mut best = levenshtein(hyp, reference);
    let mut seen: HashSet<Vec<T>> = HashSet::new();
    seen.insert(hyp.to_vec());
    let mut frontier = vec![hyp.to_vec()];
    let mut moves = 0;
    while !frontier.is_empty() && moves + 1 < best {
        moves += 1;
        let mut next = Vec::new();
        for seq in &frontier {
            for cand in block_moves(seq) {
                if seen.insert(cand.clone()) {
                    best = best.min(moves + levenshtein(&cand, reference));
                    next.push(cand);
                }
            }
        }
        frontier = next;
    }
    best
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(String::as_str).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU with clipped counts, brevity penalty and exponential
/// smoothing of zero-match orders, on pre-tokenized (hypothesis, reference)
/// pairs. Returns a value in [0, 1].
pub fn oracle_corpus_bleu(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (hyp, reference) in pairs {
        c += hyp.len();
        r += reference.len();
        for n in 1..=4 {
            let h = ngram_counts(hyp, n);
            let rc = ngram_counts(reference, n);
            for (g, k) in &h {
                matches[n - 1] += (*k).min(rc.get(g).copied().unwrap_or(0));
                totals[n - 1] += k;
            }
        }
    }
    let mut log_sum = 0.0;
    let mut k = 1.0;
    for n in 0..4 {
        if totals[n] == 0 {
            return 0.0;
        }
        let p = if matches[n] == 0 {
            k *= 2.0;
            1.0 / (k * totals[n] as f64)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / 4.0).exp()
}

/// Paired bootstrap p-value drawing indices with `StdRng::random_range`.
pub fn oracle_bootstrap_p(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let delta: f64 = diffs.iter().sum::<f64>() / n as f64;
    if delta == 0.0 {
        return 1.0;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut against = 0usize;
    for _ in 0..resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += diffs[rng.random_range(0..n)];
        }
        if (s / n as f64) * delta.signum() <= 0.0 {
            against += 1;
        }
    }
    (2.0 * against as f64 / resamples as f64).min(1.0)
}

/// The documented shot sampler: ChaCha8 seeded with `seed`, stream set to
/// the 64-bit FNV-1a hash of `key`, then a partial Fisher-Yates shuffle
/// drawing with rejection sampling.
pub fn oracle_sample(seed: u64, key: &str, n: usize, k: usize) -> Vec<usize> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let bound = (n - i) as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        let r = loop {
            let v = rng.next_u64();
            if v < zone {
                break v % bound;
            }
        };
        pool.swap(i, i + r as usize);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn brute_ter_basics() {
        assert_eq!(brute_force_ter_edits(&toks("a b c d"), &toks("a b c d")), 0);
        assert_eq!(brute_force_ter_edits(&toks("c d a b"), &toks("a b c d")), 1);
        assert_eq!(brute_force_ter_edits(&toks("a x c d"), &toks("a b c d")), 1);
        assert_eq!(brute_force_ter_edits::<String>(&[], &toks("a b")), 2);
    }

    #[test]
    fn oracle_bleu_known_values() {
        let p = vec![(toks("a b c d"), toks("a b c d"))];
        assert!((oracle_corpus_bleu(&p) - 1.0).abs() < 1e-12);
        let p = vec![(toks("a b c d"), toks("e f g h"))];
        let want = (0.125f64 * (1.0 / 12.0) * (1.0 / 16.0) * (1.0 / 16.0)).powf(0.25);
        assert!((oracle_corpus_bleu(&p) - want).abs() < 1e-12);
        let p = vec![(toks("a b c"), toks("a b c"))];
        assert_eq!(oracle_corpus_bleu(&p), 0.0);
    }

    #[test]
    fn oracle_bootstrap_extremes() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(oracle_bootstrap_p(&a, &a, 100, 1), 1.0);
        assert_eq!(oracle_bootstrap_p(&[2.0, 3.0, 4.0], &a, 100, 1), 0.0);
    }

    #[test]
    fn sampler_is_partial_permutation() {
        let s = oracle_sample(7, "seg", 10, 4);
        let set: HashSet<_> = s.iter().collect();
        assert_eq!((s.len(), set.len()), (4, 4));
        assert!(s.iter().all(|&i| i < 10));
    }
}
