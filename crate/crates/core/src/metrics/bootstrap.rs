//! Paired bootstrap resampling over per-segment scores.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::sampling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub metric: String,
    /// mean(A) - mean(B) on the full data.
    pub delta: f64,
    pub p_value: f64,
    pub resamples: usize,
    pub seed: u64,
}

fn mean_delta(a: &[f64], b: &[f64], idx: impl Iterator<Item = usize>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in idx {
        sum += a[i] - b[i];
        n += 1;
    }
    sum / n as f64
}

/// Two-sided paired bootstrap test of mean(A) vs mean(B).
///
/// Each resample draws segment indices with replacement. The p-value is
/// twice the fraction of resamples whose delta is zero or has the opposite
/// sign of the full-data delta, capped at 1. A zero full-data delta gives 1.
pub fn paired_bootstrap(
    metric: &str,
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<SignificanceResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    if resamples == 0 {
        return Err(MetricsError::NoResamples);
    }
    let n = a.len();
    let delta = mean_delta(a, b, 0..n);
    let mut result = SignificanceResult {
        metric: metric.to_string(),
        delta,
        p_value: 1.0,
        resamples,
        seed,
    };
    if delta == 0.0 {
        return Ok(result);
    }
    let mut rng = sampling::rng(seed);
    let mut flips = 0usize;
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = sampling::uniform_below(&mut rng, n as u64) as usize;
        }
        let d = mean_delta(a, b, idx.iter().copied());
        if d * delta.signum() <= 0.0 {
            flips += 1;
        }
    }
    result.p_value = (2.0 * flips as f64 / resamples as f64).min(1.0);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists() {
        let a = [0.1, 0.5, 0.9];
        let r = paired_bootstrap("bleu", &a, &a, 1000, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.delta, 0.0);
    }

    #[test]
    fn strict_dominance() {
        let a = [0.5, 0.6, 0.7, 0.8];
        let b = [0.4, 0.5, 0.6, 0.1];
        for resamples in [1, 10, 1000] {
            assert_eq!(paired_bootstrap("x", &a, &b, resamples, 3).unwrap().p_value, 0.0);
            assert_eq!(paired_bootstrap("x", &b, &a, resamples, 3).unwrap().p_value, 0.0);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            paired_bootstrap("x", &[1.0], &[1.0, 2.0], 10, 0),
            Err(MetricsError::LengthMismatch { a: 1, b: 2 })
        );
        assert_eq!(paired_bootstrap("x", &[1.0], &[1.0], 10, 0), Err(MetricsError::TooFewSamples));
        assert_eq!(
            paired_bootstrap("x", &[1.0, 2.0], &[1.0, 1.0], 0, 0),
            Err(MetricsError::NoResamples)
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let b: Vec<f64> = (0..50).map(|i| ((i * 53) % 13) as f64 / 12.0).collect();
        let x = paired_bootstrap("m", &a, &b, 500, 11).unwrap();
        let y = paired_bootstrap("m", &a, &b, 500, 11).unwrap();
        assert_eq!(x, y);
    }
}
