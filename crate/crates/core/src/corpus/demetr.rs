//! DEMETR perturbation records.
//!
//! DEMETR pairs a source sentence with a reference English translation and a
//! deliberately perturbed copy of it carrying one labelled error. The
//! perturbed sentence is the hypothesis. Records are read from a JSON array
//! or line-delimited JSON.
//!
//! DEMETR only covers the into-English direction; German and Russian rows
//! are filed under the `en-de` and `en-ru` pools so they can extend those
//! training sets. Text fields are kept as they are.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::external::parse_type;
use super::{
    contains_span, AnnotationSource, Corpus, CorpusError, ErrorAnnotation, LangPair, Provenance,
    Segment, Severity,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemetrRecord {
    pub id: serde_json::Value,
    pub lang_tag: String,
    pub src_sent: String,
    pub eng_sent: String,
    pub pert_sent: String,
    pub severity: String,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub span: Option<String>,
}

fn pool_for(tag: &str) -> Result<LangPair, CorpusError> {
    let tag = tag.trim().to_ascii_lowercase();
    match tag.as_str() {
        "de" => LangPair::from_code("en-de"),
        "ru" => LangPair::from_code("en-ru"),
        other => LangPair::from_code(&format!("{other}-en")),
    }
}

/// The perturbed fragment: tokens of `pert` between the longest common
/// token prefix and suffix shared with `reference`.
pub(crate) fn diff_span(reference: &str, pert: &str) -> String {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let p: Vec<&str> = pert.split_whitespace().collect();
    let prefix = r.iter().zip(&p).take_while(|(a, b)| a == b).count();
    let max_suffix = r.len().min(p.len()) - prefix;
    let suffix = r
        .iter()
        .rev()
        .zip(p.iter().rev())
        .take(max_suffix)
        .take_while(|(a, b)| a == b)
        .count();
    p[prefix..p.len() - suffix].join(" ")
}

fn severity_of(label: &str) -> Result<Severity, CorpusError> {
    match label.trim().to_ascii_lowercase().as_str() {
        "base" | "none" => Ok(Severity::Neutral),
        other => other.parse(),
    }
}

pub fn parse_demetr(path: &Path) -> Result<Corpus, CorpusError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CorpusError::Io(crate::io::IoError::io(path, e)))?;
    let perr = |line: usize, msg: String| CorpusError::Parse {
        path: origin.clone(),
        line,
        msg,
    };
    let records: Vec<(usize, DemetrRecord)> = if text.trim_start().starts_with('[') {
        let v: Vec<DemetrRecord> = serde_json::from_str(&text).map_err(|e| perr(e.line(), e.to_string()))?;
        v.into_iter().map(|r| (0, r)).collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line).map_err(|e| perr(i + 1, e.to_string()))?;
            out.push((i + 1, r));
        }
        out
    };

    let mut segments = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let id = match &rec.id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let lang = pool_for(&rec.lang_tag).map_err(|e| perr(line, e.to_string()))?;
        let severity = severity_of(&rec.severity).map_err(|e| perr(line, e.to_string()))?;
        let category = match rec.error.as_deref().map(str::trim) {
            Some(label) if !label.is_empty() && severity != Severity::Neutral => {
                Some(parse_type(label).map_err(|e| perr(line, e.to_string()))?)
            }
            _ => None,
        };
        let span = match rec.span {
            Some(s) => s,
            None if severity == Severity::Neutral => String::new(),
            None => diff_span(&rec.eng_sent, &rec.pert_sent),
        };
        if severity != Severity::Neutral && !contains_span(&rec.pert_sent, &span) {
            return Err(perr(line, format!("span {span:?} not in perturbed sentence")));
        }
        let offset = (!span.is_empty()).then(|| rec.pert_sent.find(&span)).flatten();
        let seg = Segment {
            id: format!("demetr::{}::{id}", rec.lang_tag.trim().to_ascii_lowercase()),
            lang,
            system: "demetr".into(),
            source: rec.src_sent,
            hypothesis: rec.pert_sent,
            reference: Some(rec.eng_sent),
            errors: vec![ErrorAnnotation {
                span,
                offset,
                category,
                severity,
                source: AnnotationSource::Demetr,
                rater: None,
            }],
            annotated_by: vec![AnnotationSource::Demetr],
        };
        seg.validate().map_err(|e| perr(line, e.to_string()))?;
        segments.push(seg);
    }
    Corpus::new(
        segments,
        Provenance {
            files: vec![origin.clone()],
            options: "demetr".into(),
        },
    )
}
