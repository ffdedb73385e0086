//! Annotations produced by automatic annotators (InstructScore, xCOMET).
//!
//! Input is line-delimited JSON, one record per segment:
//! `{"id": "...", "spans": [{"text": "...", "type": "...", "severity": "major"}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    normalize_ws, AnnotationSource, Corpus, CorpusError, ErrorAnnotation, ErrorCategory,
    MajorCategory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpan {
    pub text: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub severity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRecord {
    pub id: String,
    #[serde(default)]
    pub spans: Vec<ExternalSpan>,
}

/// InstructScore reports error types as free-text descriptions rather than
/// MQM labels; these keyword rules map them onto the hierarchy.
const DESCRIPTION_RULES: &[(&str, &str)] = &[
    ("missing content", "Accuracy/Omission"),
    ("not present in the source", "Accuracy/Addition"),
    ("additional content", "Accuracy/Addition"),
    ("untranslated", "Accuracy/Untranslated text"),
    ("mistranslat", "Accuracy/Mistranslation"),
    ("does not accurately represent", "Accuracy/Mistranslation"),
    ("stylistic", "Style/Awkward"),
    ("punctuation", "Fluency/Punctuation"),
    ("spelling", "Fluency/Spelling"),
    ("grammar", "Fluency/Grammar"),
    ("syntax", "Fluency/Grammar"),
    ("register", "Fluency/Register"),
    ("terminology", "Terminology/Inappropriate for context"),
];

pub(crate) fn parse_type(raw: &str) -> Result<ErrorCategory, CorpusError> {
    if let Ok(c) = ErrorCategory::parse(raw) {
        return Ok(c);
    }
    let lower = raw.to_lowercase();
    for (needle, label) in DESCRIPTION_RULES {
        if lower.contains(needle) {
            let mut c = ErrorCategory::parse(label).expect("rule labels are valid");
            c.raw = raw.trim().to_string();
            return Ok(c);
        }
    }
    Err(CorpusError::UnknownCategory(raw.to_string()))
}

/// Attaches the annotations in `path` to `corpus` under `source`.
///
/// Existing annotations from other sources are kept; a previous attachment
/// from the same source is replaced.
pub fn parse_external_annotations(
    path: &Path,
    source: AnnotationSource,
    corpus: &Corpus,
) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CorpusError::Io(crate::io::IoError::io(path, e)))?;
    let origin = path.display().to_string();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExternalRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: origin.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    attach(records, &origin, source, corpus)
}

pub(crate) fn attach(
    records: Vec<(usize, ExternalRecord)>,
    origin: &str,
    source: AnnotationSource,
    corpus: &Corpus,
) -> Result<Corpus, CorpusError> {
    let mut segments = corpus.segments().to_vec();
    let index: std::collections::HashMap<String, usize> = corpus
        .index()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    for (line, rec) in records {
        let &idx = index.get(&rec.id).ok_or_else(|| CorpusError::UnknownSegment {
            path: origin.to_string(),
            line,
            id: rec.id.clone(),
        })?;
        let seg = &mut segments[idx];
        seg.errors.retain(|e| e.source != source);
        if !seg.annotated_by.contains(&source) {
            seg.annotated_by.push(source);
        }
        for span in rec.spans {
            if source == AnnotationSource::XComet && span.kind.is_some() {
                return Err(CorpusError::XCometWithCategory {
                    path: origin.to_string(),
                    line,
                    id: rec.id.clone(),
                });
            }
            let severity = span.severity.parse().map_err(|e: CorpusError| CorpusError::Parse {
                path: origin.to_string(),
                line,
                msg: e.to_string(),
            })?;
            let category = match span.kind.as_deref() {
                Some(k) if !k.trim().is_empty() => {
                    let c = parse_type(k).map_err(|e| CorpusError::Parse {
                        path: origin.to_string(),
                        line,
                        msg: e.to_string(),
                    })?;
                    if source == AnnotationSource::InstructScore
                        && matches!(
                            c.major,
                            MajorCategory::SourceError | MajorCategory::NonTranslation | MajorCategory::Other
                        )
                    {
                        log::warn!("{origin}:{line}: InstructScore does not emit {:?}", c.major);
                    }
                    Some(c)
                }
                _ => None,
            };
            // Unlocated spans bind to the first occurrence in the raw text.
            let offset = seg.hypothesis.find(&span.text).filter(|_| !span.text.is_empty());
            let ann = ErrorAnnotation {
                span: span.text,
                offset,
                category,
                severity,
                source,
                rater: None,
            };
            if !ann.is_neutral()
                && offset.is_none()
                && !normalize_ws(&seg.hypothesis).contains(&normalize_ws(&ann.span))
            {
                return Err(CorpusError::SpanNotFound {
                    id: seg.id.clone(),
                    span: ann.span,
                });
            }
            seg.errors.push(ann);
        }
    }
    let mut out = Corpus::new(segments, corpus.provenance.clone())?;
    out.provenance.files.push(origin.to_string());
    Ok(out)
}
