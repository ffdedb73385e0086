//! MQM penalties and the 0-100 quality score used by score feedback.
//!
//! Weights follow the standard MQM scheme: a major non-translation costs 25,
//! any other major error 5, a minor punctuation error 0.1, any other minor
//! error 1 and neutral annotations nothing. Critical errors, which not every
//! annotator emits, take the major row unless overridden.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ErrorAnnotation, MajorCategory, Segment, Severity};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("penalty must be non-negative, got {0}")]
    NegativePenalty(f64),
    #[error("weight table {path}: {msg}")]
    BadWeights { path: String, msg: String },
}

/// Penalty weight per (severity, category class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightTable {
    pub major_non_translation: f64,
    pub major_other: f64,
    pub minor_punctuation: f64,
    pub minor_other: f64,
    pub neutral: f64,
    pub critical_non_translation: f64,
    pub critical_other: f64,
    /// Penalty at which the normalized score reaches 0.
    pub max_penalty: f64,
}

impl Default for WeightTable {
    fn default() -> Self {
        WeightTable {
            major_non_translation: 25.0,
            major_other: 5.0,
            minor_punctuation: 0.1,
            minor_other: 1.0,
            neutral: 0.0,
            critical_non_translation: 25.0,
            critical_other: 5.0,
            max_penalty: 25.0,
        }
    }
}

/// How annotations from several raters combine into one penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorePolicy {
    /// Per-rater sums averaged over raters.
    #[default]
    Average,
    /// Sum over every annotation regardless of rater.
    KeepAll,
}

impl std::str::FromStr for ScorePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(ScorePolicy::Average),
            "keep-all" | "keep_all" => Ok(ScorePolicy::KeepAll),
            other => Err(format!("unknown score policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub penalty: f64,
    pub normalized: f64,
}

impl QualityScore {
    /// Integer shown in prompts, rounded half away from zero.
    pub fn display(&self) -> i64 {
        self.normalized.round() as i64
    }
}

impl WeightTable {
    /// Loads a JSON override; missing keys keep their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self, ScoringError> {
        let bad = |msg: String| ScoringError::BadWeights {
            path: path.display().to_string(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let table: WeightTable = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let fields = [
            table.major_non_translation,
            table.major_other,
            table.minor_punctuation,
            table.minor_other,
            table.neutral,
            table.critical_non_translation,
            table.critical_other,
        ];
        if fields.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(bad("weights must be finite and non-negative".into()));
        }
        if !(table.max_penalty.is_finite() && table.max_penalty > 0.0) {
            return Err(bad("max_penalty must be positive".into()));
        }
        Ok(table)
    }

    pub fn weight(&self, ann: &ErrorAnnotation) -> f64 {
        let non_translation = ann
            .category
            .as_ref()
            .is_some_and(|c| c.major == MajorCategory::NonTranslation);
        let punctuation = ann.category.as_ref().is_some_and(|c| c.is_punctuation());
        match ann.severity {
            Severity::Neutral => self.neutral,
            Severity::Critical if non_translation => self.critical_non_translation,
            Severity::Critical => self.critical_other,
            Severity::Major if non_translation => self.major_non_translation,
            Severity::Major => self.major_other,
            Severity::Minor if punctuation => self.minor_punctuation,
            Severity::Minor => self.minor_other,
        }
    }

    /// Penalty of an arbitrary annotation set.
    pub fn penalty<'a>(
        &self,
        annotations: impl IntoIterator<Item = &'a ErrorAnnotation>,
        policy: ScorePolicy,
    ) -> f64 {
        match policy {
            ScorePolicy::KeepAll => annotations.into_iter().map(|a| self.weight(a)).sum(),
            ScorePolicy::Average => {
                let mut per_rater: BTreeMap<&str, f64> = BTreeMap::new();
                for a in annotations {
                    *per_rater.entry(a.rater.as_deref().unwrap_or("")).or_default() += self.weight(a);
                }
                if per_rater.is_empty() {
                    0.0
                } else {
                    per_rater.values().sum::<f64>() / per_rater.len() as f64
                }
            }
        }
    }

    /// Penalty from the segment's human annotations (MQM raters, DEMETR).
    pub fn segment_penalty(&self, seg: &Segment, policy: ScorePolicy) -> f64 {
        self.penalty(seg.human_errors(), policy)
    }

    /// Maps a penalty onto 0-100: `100 * (1 - penalty / max_penalty)`, clamped.
    pub fn normalize(&self, penalty: f64) -> Result<f64, ScoringError> {
        if penalty.is_nan() || penalty < 0.0 {
            return Err(ScoringError::NegativePenalty(penalty));
        }
        Ok((100.0 * (1.0 - penalty / self.max_penalty)).clamp(0.0, 100.0))
    }

    pub fn score(&self, seg: &Segment, policy: ScorePolicy) -> QualityScore {
        let penalty = self.segment_penalty(seg, policy);
        let normalized = self.normalize(penalty).expect("weights are non-negative");
        QualityScore {
            penalty,
            normalized,
        }
    }
}

/// [`WeightTable::normalize`] with the default table.
pub fn normalize(penalty: f64) -> Result<f64, ScoringError> {
    WeightTable::default().normalize(penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationSource, ErrorCategory, LangPair};
    use proptest::prelude::*;

    fn ann(cat: Option<&str>, sev: Severity, rater: &str) -> ErrorAnnotation {
        ErrorAnnotation {
            span: String::new(),
            offset: None,
            category: cat.map(|c| ErrorCategory::parse(c).unwrap()),
            severity: sev,
            source: AnnotationSource::Mqm,
            rater: Some(rater.into()),
        }
    }

    fn seg(errors: Vec<ErrorAnnotation>) -> Segment {
        Segment {
            id: "x".into(),
            lang: LangPair::from_code("en-de").unwrap(),
            system: "s".into(),
            source: "a".into(),
            hypothesis: "b".into(),
            reference: None,
            errors,
            annotated_by: vec![AnnotationSource::Mqm],
        }
    }

    #[test]
    fn weight_classes() {
        let w = WeightTable::default();
        let p = |c, s| w.segment_penalty(&seg(vec![ann(c, s, "r")]), ScorePolicy::Average);
        assert_eq!(p(Some("Non-translation!"), Severity::Major), 25.0);
        assert_eq!(p(Some("Accuracy/Mistranslation"), Severity::Major), 5.0);
        assert_eq!(p(Some("Fluency/Punctuation"), Severity::Minor), 0.1);
        assert_eq!(p(Some("Fluency/Grammar"), Severity::Minor), 1.0);
        assert_eq!(p(None, Severity::Neutral), 0.0);
        assert_eq!(p(Some("Non-translation"), Severity::Critical), 25.0);
        assert_eq!(p(None, Severity::Critical), 5.0);
        assert_eq!(w.segment_penalty(&seg(vec![]), ScorePolicy::Average), 0.0);
    }

    #[test]
    fn rater_averaging() {
        let w = WeightTable::default();
        let s = seg(vec![
            ann(Some("Accuracy/Omission"), Severity::Major, "r1"),
            ann(Some("Fluency/Grammar"), Severity::Minor, "r1"),
            ann(None, Severity::Neutral, "r2"),
        ]);
        assert_eq!(w.segment_penalty(&s, ScorePolicy::Average), 3.0);
        assert_eq!(w.segment_penalty(&s, ScorePolicy::KeepAll), 6.0);
    }

    #[test]
    fn automatic_annotations_do_not_count() {
        let w = WeightTable::default();
        let mut a = ann(None, Severity::Major, "r");
        a.source = AnnotationSource::XComet;
        assert_eq!(w.segment_penalty(&seg(vec![a]), ScorePolicy::KeepAll), 0.0);
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize(0.0).unwrap(), 100.0);
        assert_eq!(normalize(25.0).unwrap(), 0.0);
        assert_eq!(normalize(5.0).unwrap(), 80.0);
        assert_eq!(normalize(60.0).unwrap(), 0.0);
        assert!(normalize(-0.5).is_err());
        assert!(normalize(f64::NAN).is_err());
    }

    #[test]
    fn display_rounds_half_away_from_zero() {
        let q = QualityScore {
            penalty: 0.0,
            normalized: 84.5,
        };
        assert_eq!(q.display(), 85);
        let q = QualityScore {
            penalty: 0.0,
            normalized: 84.4999,
        };
        assert_eq!(q.display(), 84);
    }

    #[test]
    fn override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        std::fs::write(&path, r#"{"critical_other": 10}"#).unwrap();
        let w = WeightTable::from_json_file(&path).unwrap();
        assert_eq!(w.critical_other, 10.0);
        assert_eq!(w.major_other, 5.0);
        std::fs::write(&path, r#"{"minor_other": -1}"#).unwrap();
        assert!(WeightTable::from_json_file(&path).is_err());
        std::fs::write(&path, r#"{"bogus": 1}"#).unwrap();
        assert!(WeightTable::from_json_file(&path).is_err());
    }

    fn arb_ann() -> impl Strategy<Value = ErrorAnnotation> {
        let cats = prop_oneof![
            Just(None),
            Just(Some("Accuracy/Mistranslation")),
            Just(Some("Fluency/Punctuation")),
            Just(Some("Non-translation")),
            Just(Some("Style/Awkward")),
        ];
        let sevs = prop_oneof![
            Just(Severity::Critical),
            Just(Severity::Major),
            Just(Severity::Minor),
            Just(Severity::Neutral)
        ];
        (cats, sevs, 0..3u8).prop_map(|(c, s, r)| ann(c, s, &format!("r{r}")))
    }

    proptest! {
        #[test]
        fn adding_an_error_never_raises_the_score(
            base in proptest::collection::vec(arb_ann(), 0..6),
            extra in arb_ann(),
        ) {
            let w = WeightTable::default();
            let before = w.score(&seg(base.clone()), ScorePolicy::KeepAll).normalized;
            let mut more = base;
            more.push(extra);
            let after = w.score(&seg(more), ScorePolicy::KeepAll).normalized;
            prop_assert!(after <= before);
        }

        #[test]
        fn score_ignores_annotation_order(
            anns in proptest::collection::vec(arb_ann(), 0..8),
            rot in 0usize..8,
        ) {
            let w = WeightTable::default();
            let mut rotated = anns.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            for policy in [ScorePolicy::Average, ScorePolicy::KeepAll] {
                let a = w.score(&seg(anns.clone()), policy).normalized;
                let b = w.score(&seg(rotated.clone()), policy).normalized;
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn normalize_is_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(normalize(lo).unwrap() >= normalize(hi).unwrap());
        }
    }
}
