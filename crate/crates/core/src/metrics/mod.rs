//! Self-contained MT evaluation: BLEU, TER and paired bootstrap testing.

mod bleu;
mod bootstrap;
pub mod comet;
mod ter;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, bleu_from_stats, bleu_stats, sentence_bleu, BleuStats, MAX_ORDER};
pub use bootstrap::{paired_bootstrap, SignificanceResult};
pub use ter::{
    corpus_rate, edit_distance, ter, ter_edits, ter_segments, TerEdits, MAX_SHIFT_CANDIDATES,
    MAX_SHIFT_LEN,
};
pub use tokenize::{tokenize, TokenizerConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no segments to score")]
    Empty,
    #[error("segment {0}: empty reference")]
    EmptyReference(usize),
    #[error("{a} hypotheses but {b} references")]
    LengthMismatch { a: usize, b: usize },
    #[error("bootstrap needs at least two paired scores")]
    TooFewSamples,
    #[error("bootstrap needs at least one resample")]
    NoResamples,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
    pub tokenizer: String,
}

impl TokenizedPair {
    pub fn new(hypothesis: &str, reference: &str, cfg: TokenizerConfig) -> Self {
        TokenizedPair {
            hypothesis: tokenize(hypothesis, cfg),
            reference: tokenize(reference, cfg),
            tokenizer: cfg.id(),
        }
    }

    /// Pre-tokenized input.
    pub fn from_tokens<S: Into<String>>(
        hypothesis: impl IntoIterator<Item = S>,
        reference: impl IntoIterator<Item = S>,
    ) -> Self {
        TokenizedPair {
            hypothesis: hypothesis.into_iter().map(Into::into).collect(),
            reference: reference.into_iter().map(Into::into).collect(),
            tokenizer: "none".into(),
        }
    }
}

/// Corpus and per-segment scores for one system. All values are in the 0-1
/// range except TER, which can exceed 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub signature: String,
    pub n: usize,
    pub bleu: f64,
    pub ter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet: Option<f64>,
    pub bleu_per_segment: Vec<f64>,
    pub ter_per_segment: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet_per_segment: Option<Vec<f64>>,
}

/// Scoring signature: tokenizer, case, smoothing and TER settings.
pub fn signature(cfg: TokenizerConfig) -> String {
    format!(
        "nrefs:1|{}|bleu:smooth-exp|ter:shift-len-{}",
        cfg.id(),
        MAX_SHIFT_LEN
    )
}

/// Scores `hypotheses` against `references` (one reference each).
pub fn evaluate(
    hypotheses: &[String],
    references: &[String],
    cfg: TokenizerConfig,
) -> Result<MetricReport, MetricsError> {
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            a: hypotheses.len(),
            b: references.len(),
        });
    }
    let pairs: Vec<TokenizedPair> = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| TokenizedPair::new(h, r, cfg))
        .collect();
    let corpus_bleu = bleu(&pairs)?;
    let edits = ter_segments(&pairs);
    Ok(MetricReport {
        signature: signature(cfg),
        n: pairs.len(),
        bleu: corpus_bleu,
        ter: corpus_rate(&edits),
        comet: None,
        bleu_per_segment: pairs.iter().map(sentence_bleu).collect(),
        ter_per_segment: edits.iter().map(TerEdits::rate).collect(),
        comet_per_segment: None,
    })
}

/// Rounds to four decimals for reporting.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_identity() {
        let h = vec!["Hello there, my friend.".to_string(), "One two three four.".to_string()];
        let r = evaluate(&h, &h, TokenizerConfig::default()).unwrap();
        assert_eq!(r.bleu, 1.0);
        assert_eq!(r.ter, 0.0);
        assert_eq!(r.bleu_per_segment, vec![1.0, 1.0]);
        assert_eq!(r.n, 2);
        assert!(r.signature.contains("case:mixed"));
    }

    #[test]
    fn evaluate_length_mismatch() {
        let err = evaluate(&["a".into()], &[], TokenizerConfig::default()).unwrap_err();
        assert_eq!(err, MetricsError::LengthMismatch { a: 1, b: 0 });
    }

    #[test]
    fn lowercase_option() {
        let h = vec!["HELLO world again now".to_string()];
        let r = vec!["hello world again now".to_string()];
        assert!(evaluate(&h, &r, TokenizerConfig::default()).unwrap().bleu < 1.0);
        assert_eq!(evaluate(&h, &r, TokenizerConfig { lowercase: true }).unwrap().bleu, 1.0);
    }

    #[test]
    fn rounding() {
        assert_eq!(round4(0.123456), 0.1235);
        assert_eq!(format!("{:.4}", 0.0799), "0.0799");
    }
}
