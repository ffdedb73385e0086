use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{normalize_ws, Corpus, Segment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Filter {
    /// At least one non-Neutral annotation.
    HasError,
    /// No non-Neutral annotation.
    NoError,
    LangPair(String),
    System(String),
}

impl Filter {
    pub fn matches(&self, seg: &Segment) -> bool {
        match self {
            Filter::HasError => seg.has_error(),
            Filter::NoError => !seg.has_error(),
            Filter::LangPair(code) => seg.lang.code() == code,
            Filter::System(name) => seg.system == *name,
        }
    }
}

pub fn filter_segments(corpus: &Corpus, filter: &Filter) -> Corpus {
    let segments = corpus
        .segments()
        .iter()
        .filter(|s| filter.matches(s))
        .cloned()
        .collect();
    Corpus::new(segments, corpus.provenance.clone()).expect("subset of a valid corpus")
}

/// Drops every segment whose source or hypothesis (trimmed) also appears as
/// a source or hypothesis in `test`. Returns the kept corpus and the number
/// of removed segments.
pub fn dedup_against(corpus: &Corpus, test: &Corpus) -> (Corpus, usize) {
    let mut seen: HashSet<&str> = HashSet::new();
    for s in test.segments() {
        seen.insert(s.source.trim());
        seen.insert(s.hypothesis.trim());
    }
    let kept: Vec<Segment> = corpus
        .segments()
        .iter()
        .filter(|s| !seen.contains(s.source.trim()) && !seen.contains(s.hypothesis.trim()))
        .cloned()
        .collect();
    let removed = corpus.len() - kept.len();
    (
        Corpus::new(kept, corpus.provenance.clone()).expect("subset of a valid corpus"),
        removed,
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub segments: usize,
    pub errors: usize,
    pub errors_by_category: BTreeMap<String, usize>,
    pub errors_by_severity: BTreeMap<String, usize>,
    /// Mean located span length in characters, after whitespace normalization.
    pub mean_span_length: f64,
    pub mean_errors_per_segment: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub pairs: BTreeMap<String, PairStats>,
}

/// Per-language-pair counts over non-Neutral annotations.
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut pairs: BTreeMap<String, PairStats> = BTreeMap::new();
    let mut span_sums: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for seg in corpus.segments() {
        let code = seg.lang.code().to_string();
        let stats = pairs.entry(code.clone()).or_default();
        stats.segments += 1;
        for e in seg.errors.iter().filter(|e| !e.is_neutral()) {
            stats.errors += 1;
            let cat = e
                .category
                .as_ref()
                .map_or("Uncategorized", |c| c.major.label());
            *stats.errors_by_category.entry(cat.to_string()).or_default() += 1;
            *stats
                .errors_by_severity
                .entry(e.severity.word().to_string())
                .or_default() += 1;
            let len = normalize_ws(&e.span).chars().count();
            if len > 0 {
                let acc = span_sums.entry(code.clone()).or_default();
                acc.0 += len;
                acc.1 += 1;
            }
        }
    }
    for (code, stats) in pairs.iter_mut() {
        if let Some(&(total, n)) = span_sums.get(code) {
            stats.mean_span_length = total as f64 / n as f64;
        }
        stats.mean_errors_per_segment = stats.errors as f64 / stats.segments as f64;
    }
    StatsReport { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationSource, ErrorAnnotation, ErrorCategory, LangPair, Severity};

    fn seg(id: &str, lang: &str, src: &str, hyp: &str, errs: &[(&str, Severity)]) -> Segment {
        Segment {
            id: id.into(),
            lang: LangPair::from_code(lang).unwrap(),
            system: format!("sys-{lang}"),
            source: src.into(),
            hypothesis: hyp.into(),
            reference: Some(format!("ref {id}")),
            errors: errs
                .iter()
                .map(|(span, sev)| ErrorAnnotation {
                    span: span.to_string(),
                    offset: None,
                    category: Some(ErrorCategory::parse("Accuracy/Omission").unwrap()),
                    severity: *sev,
                    source: AnnotationSource::Mqm,
                    rater: None,
                })
                .collect(),
            annotated_by: vec![AnnotationSource::Mqm],
        }
    }

    fn three() -> Corpus {
        Corpus::from_segments(vec![
            seg("1", "en-de", "a", "abcd x", &[("abcd", Severity::Major)]),
            seg("2", "en-de", "b", "y", &[("", Severity::Neutral)]),
            seg("3", "zh-en", "c", "abcdef z", &[("abcdef", Severity::Minor)]),
        ])
        .unwrap()
    }

    #[test]
    fn filters() {
        let c = three();
        assert_eq!(filter_segments(&c, &Filter::HasError).len(), 2);
        assert_eq!(filter_segments(&c, &Filter::NoError).len(), 1);
        let de = filter_segments(&c, &Filter::LangPair("en-de".into()));
        assert_eq!(de.len(), 2);
        assert!(de.segments().iter().all(|s| s.lang.code() == "en-de"));
        assert_eq!(filter_segments(&c, &Filter::System("sys-zh-en".into())).len(), 1);
    }

    #[test]
    fn dedup_rules() {
        let train = Corpus::from_segments(vec![
            seg("t1", "en-de", "shared src", "h1", &[]),
            seg("t2", "en-de", "other", "h2", &[]),
            seg("t3", "en-de", "x", "shared hyp ", &[]),
        ])
        .unwrap();
        let test = Corpus::from_segments(vec![
            seg("e1", "en-de", " shared src", "q", &[]),
            seg("e2", "en-de", "r", "shared hyp", &[]),
        ])
        .unwrap();
        let (kept, removed) = dedup_against(&train, &test);
        assert_eq!(removed, 2);
        assert_eq!(kept.segments()[0].id, "t2");
    }

    #[test]
    fn dedup_ignores_reference_overlap() {
        let mut a = seg("t", "en-de", "s1", "h1", &[]);
        a.reference = Some("same".into());
        let mut b = seg("e", "en-de", "s2", "h2", &[]);
        b.reference = Some("same".into());
        let (kept, removed) = dedup_against(
            &Corpus::from_segments(vec![a]).unwrap(),
            &Corpus::from_segments(vec![b]).unwrap(),
        );
        assert_eq!((kept.len(), removed), (1, 0));
    }

    #[test]
    fn stats_span_means() {
        let c = Corpus::from_segments(vec![
            seg("1", "en-de", "a", "abcd x", &[("abcd", Severity::Major)]),
            seg("2", "en-de", "b", "abcdef", &[("abcdef", Severity::Minor)]),
        ])
        .unwrap();
        let r = corpus_stats(&c);
        let s = &r.pairs["en-de"];
        assert_eq!(s.mean_span_length, 5.0);
        assert_eq!(s.errors, 2);
        assert_eq!(s.mean_errors_per_segment, 1.0);
        assert_eq!(s.errors_by_severity["major"], 1);
        assert_eq!(s.errors_by_category["Accuracy"], 2);
    }

    #[test]
    fn stats_neutral_only() {
        let c = Corpus::from_segments(vec![seg("1", "en-de", "a", "b", &[("", Severity::Neutral)])])
            .unwrap();
        let s = &corpus_stats(&c).pairs["en-de"];
        assert_eq!(s.errors, 0);
        assert!(s.errors_by_category.is_empty());
        assert_eq!(s.mean_span_length, 0.0);
    }
}
