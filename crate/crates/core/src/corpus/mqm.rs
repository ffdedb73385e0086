//! WMT MQM human-evaluation TSV.
//!
//! One row per (segment, rater, error). The erroneous fragment is marked
//! inline in the target column with `<v>` … `</v>`; the markers are removed
//! from the stored hypothesis and their position is kept as a byte offset.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AnnotationSource, Corpus, CorpusError, ErrorAnnotation, ErrorCategory, LangPair, Provenance,
    Segment, Severity,
};

const OPEN: &str = "<v>";
const CLOSE: &str = "</v>";

/// What to do when several raters annotated the same segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaterPolicy {
    /// Keep every rater's annotations, tagged with the rater name.
    #[default]
    KeepAll,
    /// Keep only the annotations of the first rater seen for a segment.
    FirstRater,
}

impl std::str::FromStr for RaterPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep-all" | "keep_all" => Ok(RaterPolicy::KeepAll),
            "first-rater" | "first_rater" => Ok(RaterPolicy::FirstRater),
            other => Err(format!("unknown rater policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqmParseOptions {
    pub rater_policy: RaterPolicy,
}

struct Columns {
    system: usize,
    doc: Option<usize>,
    seg: usize,
    rater: usize,
    source: usize,
    target: usize,
    category: usize,
    severity: usize,
    reference: Option<usize>,
    width: usize,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self, String> {
        let find = |names: &[&str]| {
            header
                .iter()
                .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
        };
        let need = |names: &[&str]| find(names).ok_or_else(|| format!("missing column {:?}", names[0]));
        Ok(Columns {
            system: need(&["system"])?,
            doc: find(&["doc"]),
            seg: need(&["seg_id", "seg", "segment_id"])?,
            rater: need(&["rater"])?,
            source: need(&["source"])?,
            target: need(&["target", "hypothesis"])?,
            category: need(&["category"])?,
            severity: need(&["severity"])?,
            reference: find(&["reference", "ref"]),
            width: header.len(),
        })
    }
}

/// Removes `<v>`/`</v>` markers. Returns the clean text and the marked
/// span with its byte offset in the clean text.
pub(crate) fn strip_markers(text: &str) -> Result<(String, Option<(String, usize)>), String> {
    let mut clean = String::with_capacity(text.len());
    let mut span: Option<(String, usize)> = None;
    let mut open_at: Option<usize> = None;
    let mut rest = text;
    loop {
        let next_open = rest.find(OPEN);
        let next_close = rest.find(CLOSE);
        let (pos, is_open) = match (next_open, next_close) {
            (None, None) => break,
            (Some(o), None) => (o, true),
            (None, Some(c)) => (c, false),
            (Some(o), Some(c)) => {
                if o < c {
                    (o, true)
                } else {
                    (c, false)
                }
            }
        };
        clean.push_str(&rest[..pos]);
        if is_open {
            if open_at.is_some() {
                return Err("nested <v> marker".into());
            }
            if span.is_some() {
                return Err("more than one <v>…</v> span".into());
            }
            open_at = Some(clean.len());
            rest = &rest[pos + OPEN.len()..];
        } else {
            let start = open_at.take().ok_or("</v> without matching <v>")?;
            span = Some((clean[start..].to_string(), start));
            rest = &rest[pos + CLOSE.len()..];
        }
    }
    if open_at.is_some() {
        return Err("<v> without matching </v>".into());
    }
    clean.push_str(rest);
    Ok((clean, span))
}

pub fn parse_mqm_tsv(
    path: &Path,
    lang: &LangPair,
    opts: &MqmParseOptions,
) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CorpusError::Io(crate::io::IoError::io(path, e)))?;
    let mut corpus = parse_mqm_tsv_str(&text, &path.display().to_string(), lang, opts)?;
    corpus.provenance = Provenance {
        files: vec![path.display().to_string()],
        options: format!("mqm-tsv lang={} rater_policy={:?}", lang.code(), opts.rater_policy),
    };
    Ok(corpus)
}

/// Parses MQM TSV text; `origin` names the input in error messages.
pub fn parse_mqm_tsv_str(
    text: &str,
    origin: &str,
    lang: &LangPair,
    opts: &MqmParseOptions,
) -> Result<Corpus, CorpusError> {
    let perr = |line: usize, msg: String| CorpusError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let cols = Columns::from_header(&header).map_err(|m| perr(1, m))?;

    let mut segments: Vec<Segment> = Vec::new();
    let mut by_key: HashMap<String, usize> = HashMap::new();
    let mut first_rater: HashMap<usize, String> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            perr(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols.width {
            return Err(perr(
                line,
                format!("expected {} columns, found {}", cols.width, record.len()),
            ));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let system = field(cols.system).trim();
        let doc = cols.doc.map_or("", |i| field(i).trim());
        let seg_no = field(cols.seg).trim();
        let rater = field(cols.rater).trim();
        let id = format!("{system}::{doc}::{seg_no}");

        let (hypothesis, marked) =
            strip_markers(field(cols.target)).map_err(|m| perr(line, format!("target: {m}")))?;
        let (source, _) =
            strip_markers(field(cols.source)).map_err(|m| perr(line, format!("source: {m}")))?;

        let raw_category = field(cols.category).trim();
        let no_error_category = raw_category.eq_ignore_ascii_case("no-error")
            || raw_category.eq_ignore_ascii_case("no error");
        let severity: Severity = field(cols.severity)
            .parse()
            .map_err(|e: CorpusError| perr(line, e.to_string()))?;
        let severity = if no_error_category {
            Severity::Neutral
        } else {
            severity
        };
        let category = if no_error_category || raw_category.is_empty() {
            None
        } else {
            Some(ErrorCategory::parse(raw_category).map_err(|e| perr(line, e.to_string()))?)
        };
        let (span, offset) = match (no_error_category, marked) {
            (false, Some((s, o))) => (s, Some(o)),
            _ => (String::new(), None),
        };

        let idx = match by_key.get(&id) {
            Some(&i) => i,
            None => {
                if source.trim().is_empty() || hypothesis.trim().is_empty() {
                    return Err(perr(line, "empty source or target".into()));
                }
                let reference = cols
                    .reference
                    .map(|i| field(i).to_string())
                    .filter(|r| !r.trim().is_empty());
                segments.push(Segment {
                    id: id.clone(),
                    lang: lang.clone(),
                    system: system.to_string(),
                    source,
                    hypothesis: hypothesis.clone(),
                    reference,
                    errors: Vec::new(),
                    annotated_by: vec![AnnotationSource::Mqm],
                });
                by_key.insert(id.clone(), segments.len() - 1);
                segments.len() - 1
            }
        };
        if opts.rater_policy == RaterPolicy::FirstRater {
            let first = first_rater.entry(idx).or_insert_with(|| rater.to_string());
            if first != rater {
                continue;
            }
        }
        let seg = &mut segments[idx];
        // Offsets are only meaningful against the text they were taken from.
        let offset = if seg.hypothesis == hypothesis {
            offset
        } else {
            None
        };
        seg.errors.push(ErrorAnnotation {
            span,
            offset,
            category,
            severity,
            source: AnnotationSource::Mqm,
            rater: (!rater.is_empty()).then(|| rater.to_string()),
        });
    }
    for s in &segments {
        s.validate()?;
    }
    Corpus::new(segments, Provenance::default())
}
