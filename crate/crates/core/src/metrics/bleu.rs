//! Corpus BLEU-4 with exponential smoothing.
//!
//! Orders with zero clipped matches get precision `1 / (s * total)` where
//! `s` starts at 1 and doubles for each such order. An order with no
//! candidate n-grams at all leaves the score at zero.

use std::collections::HashMap;

use super::{MetricsError, TokenizedPair};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for BLEU; they add up across segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

pub fn bleu_stats(pair: &TokenizedPair) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: pair.hypothesis.len() as u64,
        ref_len: pair.reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let hyp = ngram_counts(&pair.hypothesis, n);
        let reference = ngram_counts(&pair.reference, n);
        s.totals[n - 1] = pair.hypothesis.len().saturating_sub(n - 1) as u64;
        s.matches[n - 1] = hyp
            .iter()
            .map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

fn smoothed_precisions(stats: &BleuStats) -> ([f64; MAX_ORDER], usize) {
    let mut precisions = [0.0; MAX_ORDER];
    let mut smooth = 1.0;
    let mut observed = 0;
    for n in 0..MAX_ORDER {
        if stats.totals[n] == 0 {
            break;
        }
        observed = n + 1;
        precisions[n] = if stats.matches[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * stats.totals[n] as f64)
        } else {
            stats.matches[n] as f64 / stats.totals[n] as f64
        };
    }
    (precisions, observed)
}

fn brevity_penalty(stats: &BleuStats) -> f64 {
    if stats.hyp_len == 0 {
        0.0
    } else if stats.hyp_len < stats.ref_len {
        (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// BLEU in [0, 1] from accumulated statistics, over all four orders.
pub fn bleu_from_stats(stats: &BleuStats) -> f64 {
    let (p, observed) = smoothed_precisions(stats);
    if observed < MAX_ORDER {
        return 0.0;
    }
    let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / MAX_ORDER as f64;
    brevity_penalty(stats) * log_mean.exp()
}

/// Sentence-level BLEU that averages only over orders the hypothesis is
/// long enough to have. Used for per-segment scores.
pub fn sentence_bleu(pair: &TokenizedPair) -> f64 {
    let stats = bleu_stats(pair);
    let (p, observed) = smoothed_precisions(&stats);
    if observed == 0 {
        return 0.0;
    }
    let log_mean = p[..observed].iter().map(|x| x.ln()).sum::<f64>() / observed as f64;
    brevity_penalty(&stats) * log_mean.exp()
}

pub fn bleu(pairs: &[TokenizedPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = BleuStats::default();
    for (i, p) in pairs.iter().enumerate() {
        if p.reference.is_empty() {
            return Err(MetricsError::EmptyReference(i));
        }
        total += bleu_stats(p);
    }
    Ok(bleu_from_stats(&total))
}
