//! Post-hoc analyses over post-edited output.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_ws, AnnotationSource, Corpus, ErrorAnnotation, MajorCategory};
use crate::gateway::PostEditRecord;
use crate::metrics::{evaluate, MetricReport, MetricsError, TokenizerConfig};
use crate::sampling;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("record refers to unknown segment {0:?}")]
    MissingSegment(String),
    #[error("segment {0:?} has no edit record")]
    MissingRecord(String),
    #[error("segment {0:?} has no reference")]
    MissingReference(String),
    #[error("no segment is annotated by both {0} and {1}")]
    SourceAbsent(AnnotationSource, AnnotationSource),
    #[error("jaccard threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

const UNCATEGORIZED: &str = "Uncategorized";

fn category_label(ann: &ErrorAnnotation) -> &'static str {
    ann.category.as_ref().map_or(UNCATEGORIZED, |c| c.major.label())
}

/// Whitespace-normalized, case-sensitive substring test.
fn span_present(output: &str, span: &str) -> bool {
    normalize_ws(output).contains(&normalize_ws(span))
}

fn record_index<'a>(
    corpus: &Corpus,
    records: &'a [PostEditRecord],
) -> Result<HashMap<&'a str, &'a PostEditRecord>, AnalysisError> {
    let ids = corpus.index();
    let mut out = HashMap::with_capacity(records.len());
    for r in records {
        if !ids.contains_key(r.segment_id.as_str()) {
            return Err(AnalysisError::MissingSegment(r.segment_id.clone()));
        }
        out.insert(r.segment_id.as_str(), r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionCounts {
    /// Span still present in the edited output.
    pub matched: usize,
    pub no_match: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub feedback: String,
    pub segments: usize,
    pub annotations: usize,
    pub categories: BTreeMap<String, ResolutionCounts>,
    pub total: ResolutionCounts,
    /// Records whose generation failed; their annotations are not counted.
    pub skipped_failed: usize,
    /// Non-neutral annotations without a span.
    pub skipped_unlocated: usize,
}

/// For every non-neutral MQM annotation on an edited segment, checks whether
/// its span survives in the edited output.
pub fn resolution_analysis(
    corpus: &Corpus,
    records: &[PostEditRecord],
) -> Result<ResolutionReport, AnalysisError> {
    let by_id = record_index(corpus, records)?;
    let mut report = ResolutionReport {
        feedback: feedback_label(records),
        ..Default::default()
    };
    for seg in corpus.segments() {
        let Some(rec) = by_id.get(seg.id.as_str()) else {
            continue;
        };
        let Some(output) = rec.hypothesis.as_deref() else {
            report.skipped_failed += 1;
            continue;
        };
        report.segments += 1;
        for ann in seg.errors_from(AnnotationSource::Mqm).filter(|a| !a.is_neutral()) {
            if ann.span.trim().is_empty() {
                report.skipped_unlocated += 1;
                continue;
            }
            let counts = report.categories.entry(category_label(ann).to_string()).or_default();
            if span_present(output, &ann.span) {
                counts.matched += 1;
                report.total.matched += 1;
            } else {
                counts.no_match += 1;
                report.total.no_match += 1;
            }
            report.annotations += 1;
        }
    }
    Ok(report)
}

fn feedback_label(records: &[PostEditRecord]) -> String {
    let kinds: std::collections::BTreeSet<&str> = records.iter().map(|r| r.feedback.as_str()).collect();
    kinds.into_iter().collect::<Vec<_>>().join("+")
}

impl ResolutionReport {
    /// Plain-text table, categories in hierarchy order.
    pub fn table(&self) -> String {
        let mut out = format!("{:<20} {:>8} {:>8}\n", "category", "matched", "no_match");
        let order = MajorCategory::ALL
            .iter()
            .map(|c| c.label())
            .chain(std::iter::once(UNCATEGORIZED));
        for label in order {
            if let Some(c) = self.categories.get(label) {
                out.push_str(&format!("{label:<20} {:>8} {:>8}\n", c.matched, c.no_match));
            }
        }
        out.push_str(&format!("{:<20} {:>8} {:>8}\n", "total", self.total.matched, self.total.no_match));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,matched,no_match\n");
        for (label, c) in &self.categories {
            out.push_str(&format!("{label},{},{}\n", c.matched, c.no_match));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum MatchRule {
    /// Equal after whitespace normalization.
    Exact,
    /// Token-set Jaccard similarity at least `theta`.
    Jaccard { theta: f64 },
}

impl MatchRule {
    pub fn id(&self) -> String {
        match self {
            MatchRule::Exact => "exact".into(),
            MatchRule::Jaccard { theta } => format!("jaccard:{theta}"),
        }
    }

    fn matches(&self, a: &str, b: &str) -> bool {
        match *self {
            MatchRule::Exact => normalize_ws(a) == normalize_ws(b),
            MatchRule::Jaccard { theta } => jaccard(a, b) >= theta,
        }
    }
}

impl std::str::FromStr for MatchRule {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exact" {
            return Ok(MatchRule::Exact);
        }
        let theta = s
            .strip_prefix("jaccard:")
            .or_else(|| s.strip_prefix("jaccard="))
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or(AnalysisError::BadThreshold(f64::NAN))?;
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(AnalysisError::BadThreshold(theta));
        }
        Ok(MatchRule::Jaccard { theta })
    }
}

/// Jaccard index of the whitespace token sets.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let x: HashSet<&str> = a.split_whitespace().collect();
    let y: HashSet<&str> = b.split_whitespace().collect();
    let union = x.union(&y).count();
    if union == 0 {
        return 0.0;
    }
    x.intersection(&y).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub source_a: AnnotationSource,
    pub source_b: AnnotationSource,
    pub rule: String,
    pub overlap: usize,
    pub sample_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Counts segments where some span from `a` matches some span from `b`.
///
/// Candidates are segments annotated by both sources on which `a` marks at
/// least one located error. With `sample = Some((n, seed))` a seeded subset
/// of `n` candidates (in corpus order) is used.
pub fn agreement(
    corpus: &Corpus,
    a: AnnotationSource,
    b: AnnotationSource,
    rule: MatchRule,
    sample: Option<(usize, u64)>,
) -> Result<AgreementReport, AnalysisError> {
    if let MatchRule::Jaccard { theta } = rule {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(AnalysisError::BadThreshold(theta));
        }
    }
    let spans = |seg: &crate::corpus::Segment, src| -> Vec<String> {
        seg.errors_from(src)
            .filter(|e| !e.is_neutral() && !e.span.trim().is_empty())
            .map(|e| e.span.clone())
            .collect()
    };
    let both: Vec<_> = corpus
        .segments()
        .iter()
        .filter(|s| s.annotated_by.contains(&a) && s.annotated_by.contains(&b))
        .collect();
    if both.is_empty() {
        return Err(AnalysisError::SourceAbsent(a, b));
    }
    let mut pool: Vec<_> = both.into_iter().filter(|s| !spans(s, a).is_empty()).collect();
    if let Some((n, seed)) = sample {
        if n < pool.len() {
            let mut rng = sampling::rng(seed);
            let mut idx = sampling::sample_indices(&mut rng, pool.len(), n);
            idx.sort_unstable();
            pool = idx.into_iter().map(|i| pool[i]).collect();
        }
    }
    let overlap = pool
        .iter()
        .filter(|s| {
            let sb = spans(s, b);
            spans(s, a).iter().any(|x| sb.iter().any(|y| rule.matches(x, y)))
        })
        .count();
    Ok(AgreementReport {
        source_a: a,
        source_b: b,
        rule: rule.id(),
        overlap,
        sample_size: pool.len(),
        seed: sample.map(|(_, s)| s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub segments: usize,
    /// Segments whose edit failed and were scored with the original output.
    pub failed: usize,
    pub changed: usize,
    pub before: MetricReport,
    pub after: MetricReport,
    pub delta_bleu: f64,
    pub delta_ter: f64,
}

/// Original outputs, edited outputs, references and the failed-edit count.
pub type Aligned = (Vec<String>, Vec<String>, Vec<String>, usize);

/// Original and edited outputs aligned with references, in corpus order.
/// Failed or missing edits keep the original hypothesis.
pub fn aligned_outputs(
    corpus: &Corpus,
    records: &[PostEditRecord],
) -> Result<Aligned, AnalysisError> {
    let by_id = record_index(corpus, records)?;
    let mut before = Vec::with_capacity(corpus.len());
    let mut after = Vec::with_capacity(corpus.len());
    let mut refs = Vec::with_capacity(corpus.len());
    let mut failed = 0;
    for seg in corpus.segments() {
        let reference = seg
            .reference
            .clone()
            .ok_or_else(|| AnalysisError::MissingReference(seg.id.clone()))?;
        let rec = by_id
            .get(seg.id.as_str())
            .ok_or_else(|| AnalysisError::MissingRecord(seg.id.clone()))?;
        let edited = match &rec.hypothesis {
            Some(h) => h.clone(),
            None => {
                failed += 1;
                seg.hypothesis.clone()
            }
        };
        before.push(seg.hypothesis.clone());
        after.push(edited);
        refs.push(reference);
    }
    Ok((before, after, refs, failed))
}

/// BLEU and TER of error-free hypotheses before and after editing.
pub fn overedit_audit(
    corpus: &Corpus,
    records: &[PostEditRecord],
    cfg: TokenizerConfig,
) -> Result<AuditReport, AnalysisError> {
    if corpus.segments().iter().any(|s| s.has_error()) {
        log::warn!("over-edit audit input contains segments with errors");
    }
    let (before, after, refs, failed) = aligned_outputs(corpus, records)?;
    let changed = before.iter().zip(&after).filter(|(b, a)| b != a).count();
    let b = evaluate(&before, &refs, cfg)?;
    let a = evaluate(&after, &refs, cfg)?;
    Ok(AuditReport {
        segments: before.len(),
        failed,
        changed,
        delta_bleu: a.bleu - b.bleu,
        delta_ter: a.ter - b.ter,
        before: b,
        after: a,
    })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::corpus::{ErrorCategory, LangPair, Segment, Severity};

    fn ann(span: &str, cat: &str, sev: Severity, src: AnnotationSource) -> ErrorAnnotation {
        ErrorAnnotation {
            span: span.into(),
            offset: None,
            category: Some(ErrorCategory::parse(cat).unwrap()),
            severity: sev,
            source: src,
            rater: None,
        }
    }

    fn corpus() -> Corpus {
        let mk = |id: &str, hyp: &str, errors: Vec<ErrorAnnotation>| Segment {
            id: id.into(),
            lang: LangPair::from_code("en-de").unwrap(),
            system: "sys".into(),
            source: format!("src {id}"),
            hypothesis: hyp.into(),
            reference: Some(format!("the reference for segment {id}")),
            errors,
            annotated_by: vec![AnnotationSource::Mqm],
        };
        Corpus::from_segments(vec![
            mk(
                "a",
                "Neue Gegenstände werden nur mit Gepäck versehen.",
                vec![
                    ann("mit Gepäck versehen", "Accuracy/Mistranslation", Severity::Major, AnnotationSource::Mqm),
                    ann("Neue", "Fluency/Grammar", Severity::Minor, AnnotationSource::Mqm),
                ],
            ),
            mk(
                "b",
                "Das ist gut.",
                vec![ann("gut", "Style/Awkward", Severity::Minor, AnnotationSource::Mqm)],
            ),
        ])
        .unwrap()
    }

    fn rec(id: &str, hyp: Option<&str>) -> PostEditRecord {
        PostEditRecord {
            segment_id: id.into(),
            feedback: "fine-grained".into(),
            k: 0,
            prompt: String::new(),
            raw_output: hyp.map(str::to_string),
            hypothesis: hyp.map(str::to_string),
            failed: hyp.is_none(),
            error: None,
            attempts: 1,
            latency: Duration::ZERO,
        }
    }

    #[test]
    fn identity_edits_resolve_nothing() {
        let c = corpus();
        let recs: Vec<_> = c.segments().iter().map(|s| rec(&s.id, Some(&s.hypothesis))).collect();
        let r = resolution_analysis(&c, &recs).unwrap();
        assert_eq!(r.total, ResolutionCounts { matched: 3, no_match: 0 });
        assert_eq!(r.categories["Accuracy"].matched, 1);
        assert_eq!(r.feedback, "fine-grained");
    }

    #[test]
    fn deleted_spans_are_no_match() {
        let c = corpus();
        let recs = vec![
            rec("a", Some("Neue Artikel werden nur verpackt.")),
            rec("b", Some("Das ist schön.")),
        ];
        let r = resolution_analysis(&c, &recs).unwrap();
        assert_eq!(r.total, ResolutionCounts { matched: 1, no_match: 2 });
        assert_eq!(r.categories["Accuracy"].no_match, 1);
        assert_eq!(r.categories["Fluency"].matched, 1);
        assert_eq!(r.total.matched + r.total.no_match, r.annotations);
    }

    #[test]
    fn whitespace_normalized_case_sensitive() {
        let c = corpus();
        let r = resolution_analysis(&c, &[rec("a", Some("nur mit  Gepäck\nversehen neue"))]).unwrap();
        assert_eq!(r.categories["Accuracy"].matched, 1);
        assert_eq!(r.categories["Fluency"].no_match, 1);
    }

    #[test]
    fn failed_and_unknown_records() {
        let c = corpus();
        let r = resolution_analysis(&c, &[rec("a", None)]).unwrap();
        assert_eq!((r.skipped_failed, r.annotations), (1, 0));
        assert!(matches!(
            resolution_analysis(&c, &[rec("zzz", Some("x"))]),
            Err(AnalysisError::MissingSegment(_))
        ));
    }

    fn two_source_corpus(b_spans: &[&str]) -> Corpus {
        let mut segs = Vec::new();
        for (i, bs) in b_spans.iter().enumerate() {
            let hyp = format!("one two three four {bs}");
            segs.push(Segment {
                id: format!("s{i}"),
                lang: LangPair::from_code("en-de").unwrap(),
                system: "sys".into(),
                source: "x".into(),
                hypothesis: hyp,
                reference: None,
                errors: vec![
                    ann("two three", "Accuracy/Omission", Severity::Major, AnnotationSource::Mqm),
                    ann(bs, "Accuracy/Omission", Severity::Major, AnnotationSource::InstructScore),
                ],
                annotated_by: vec![AnnotationSource::Mqm, AnnotationSource::InstructScore],
            });
        }
        Corpus::from_segments(segs).unwrap()
    }

    #[test]
    fn agreement_rules() {
        let c = two_source_corpus(&["two three", "three four", "zzz"]);
        let m = AnnotationSource::Mqm;
        let s = AnnotationSource::InstructScore;
        assert_eq!(agreement(&c, m, m, MatchRule::Exact, None).unwrap().overlap, 3);
        assert_eq!(agreement(&c, m, s, MatchRule::Exact, None).unwrap().overlap, 1);
        let j = agreement(&c, m, s, MatchRule::Jaccard { theta: 1.0 / 3.0 }, None).unwrap();
        assert_eq!((j.overlap, j.sample_size), (2, 3));
        assert_eq!(j.rule, "jaccard:0.3333333333333333");
        let sampled = agreement(&c, m, m, MatchRule::Exact, Some((2, 9))).unwrap();
        assert_eq!((sampled.overlap, sampled.sample_size), (2, 2));
        assert!(matches!(
            agreement(&c, m, AnnotationSource::XComet, MatchRule::Exact, None),
            Err(AnalysisError::SourceAbsent(..))
        ));
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("exact".parse::<MatchRule>().unwrap(), MatchRule::Exact);
        assert_eq!("jaccard:0.5".parse::<MatchRule>().unwrap(), MatchRule::Jaccard { theta: 0.5 });
        assert!("jaccard:0".parse::<MatchRule>().is_err());
        assert!("fuzzy".parse::<MatchRule>().is_err());
    }

    #[test]
    fn audit_identity_and_echo() {
        let c = corpus();
        let ident: Vec<_> = c.segments().iter().map(|s| rec(&s.id, Some(&s.hypothesis))).collect();
        let r = overedit_audit(&c, &ident, TokenizerConfig::default()).unwrap();
        assert_eq!((r.delta_bleu, r.delta_ter, r.changed), (0.0, 0.0, 0));
        let echo: Vec<_> = c
            .segments()
            .iter()
            .map(|s| rec(&s.id, s.reference.as_deref()))
            .collect();
        let r = overedit_audit(&c, &echo, TokenizerConfig::default()).unwrap();
        assert_eq!(r.after.bleu, 1.0);
        assert_eq!(r.after.ter, 0.0);
        assert_eq!(r.changed, 2);
    }

    #[test]
    fn audit_swap_costs_one_shift() {
        let mut seg = corpus().segments()[1].clone();
        seg.hypothesis = "a b c d".into();
        seg.reference = Some("a b c d".into());
        let c = Corpus::from_segments(vec![seg]).unwrap();
        let r = overedit_audit(&c, &[rec("b", Some("b a c d"))], TokenizerConfig::default()).unwrap();
        assert!((r.delta_ter - 0.25).abs() < 1e-12);
    }
}
