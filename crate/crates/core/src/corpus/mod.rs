//! Error-annotated translation corpora.
//!
//! A [`Corpus`] is an ordered list of [`Segment`]s. Each segment carries the
//! source, the MT hypothesis, an optional reference and the error
//! annotations attached to the hypothesis by one or more annotation sources
//! (human MQM raters, DEMETR perturbation labels, InstructScore, xCOMET).

mod demetr;
mod external;
mod mqm;
mod ops;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use demetr::{parse_demetr, DemetrRecord};
pub use external::{parse_external_annotations, ExternalRecord, ExternalSpan};
pub use mqm::{parse_mqm_tsv, parse_mqm_tsv_str, MqmParseOptions, RaterPolicy};
pub use ops::{corpus_stats, dedup_against, filter_segments, Filter, PairStats, StatsReport};

use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("unknown severity label {0:?}")]
    UnknownSeverity(String),
    #[error("unknown error category {0:?}")]
    UnknownCategory(String),
    #[error("invalid language pair {0:?}")]
    InvalidLangPair(String),
    #[error("duplicate segment id {0:?}")]
    DuplicateId(String),
    #[error("segment {0:?}: source and hypothesis must be non-empty")]
    EmptyText(String),
    #[error("segment {id:?}: span {span:?} does not occur in the hypothesis")]
    SpanNotFound { id: String, span: String },
    #[error("{path}:{line}: unknown segment id {id:?}")]
    UnknownSegment {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: xCOMET record for {id:?} carries an error type")]
    XCometWithCategory {
        path: String,
        line: usize,
        id: String,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// English names for the language codes the toolkit knows about.
const LANGUAGE_NAMES: &[(&str, &str)] = &[
    ("zh", "Chinese"),
    ("en", "English"),
    ("de", "German"),
    ("ru", "Russian"),
    ("fr", "French"),
    ("es", "Spanish"),
    ("it", "Italian"),
    ("ja", "Japanese"),
    ("cs", "Czech"),
    ("uk", "Ukrainian"),
    ("pl", "Polish"),
    ("hi", "Hindi"),
];

/// Source/target language pair. Names are English language names, which is
/// what every prompt template renders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangPair {
    src: String,
    tgt: String,
    code: String,
}

impl LangPair {
    pub fn new(src: &str, tgt: &str, code: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::InvalidLangPair(code.to_string());
        let (a, b) = code.split_once('-').ok_or_else(bad)?;
        let well_formed = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase());
        if !well_formed(a) || !well_formed(b) || a == b || src == tgt || src.is_empty() {
            return Err(bad());
        }
        Ok(LangPair {
            src: src.to_string(),
            tgt: tgt.to_string(),
            code: code.to_string(),
        })
    }

    /// Builds a pair from a short code such as `"zh-en"`.
    pub fn from_code(code: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::InvalidLangPair(code.to_string());
        let lower = code.trim().to_ascii_lowercase();
        let (a, b) = lower.split_once('-').ok_or_else(bad)?;
        let name = |c: &str| {
            LANGUAGE_NAMES
                .iter()
                .find(|(k, _)| *k == c)
                .map(|(_, n)| *n)
                .ok_or_else(bad)
        };
        LangPair::new(name(a)?, name(b)?, &lower)
    }

    pub fn src(&self) -> &str {
        &self.src
    }

    pub fn tgt(&self) -> &str {
        &self.tgt
    }

    pub fn code(&self) -> &str {
        &self.code
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

impl FromStr for LangPair {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LangPair::from_code(s)
    }
}

impl Serialize for LangPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.code)
    }
}

impl<'de> Deserialize<'de> for LangPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        LangPair::from_code(&code).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    Major,
    Minor,
    Neutral,
}

impl Severity {
    /// Lowercase word used in feedback sentences.
    pub fn word(self) -> &'static str {
        match self {
            Severity::Critical => "critical",
            Severity::Major => "major",
            Severity::Minor => "minor",
            Severity::Neutral => "neutral",
        }
    }
}

impl FromStr for Severity {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "critical" => Ok(Severity::Critical),
            "major" => Ok(Severity::Major),
            "minor" => Ok(Severity::Minor),
            "neutral" | "no-error" | "no error" | "no_error" => Ok(Severity::Neutral),
            _ => Err(CorpusError::UnknownSeverity(s.to_string())),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Top level of the MQM error hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MajorCategory {
    Accuracy,
    Fluency,
    LocalConvention,
    Terminology,
    Style,
    SourceError,
    NonTranslation,
    Other,
}

impl MajorCategory {
    pub const ALL: [MajorCategory; 8] = [
        MajorCategory::Accuracy,
        MajorCategory::Fluency,
        MajorCategory::LocalConvention,
        MajorCategory::Terminology,
        MajorCategory::Style,
        MajorCategory::SourceError,
        MajorCategory::NonTranslation,
        MajorCategory::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MajorCategory::Accuracy => "Accuracy",
            MajorCategory::Fluency => "Fluency",
            MajorCategory::LocalConvention => "Locale convention",
            MajorCategory::Terminology => "Terminology",
            MajorCategory::Style => "Style",
            MajorCategory::SourceError => "Source error",
            MajorCategory::NonTranslation => "Non-translation",
            MajorCategory::Other => "Other",
        }
    }

    fn parse(label: &str) -> Option<Self> {
        let key = canonical_key(label);
        let cat = match key.as_str() {
            "accuracy" => MajorCategory::Accuracy,
            "fluency" => MajorCategory::Fluency,
            "locale convention" | "local convention" => MajorCategory::LocalConvention,
            "terminology" => MajorCategory::Terminology,
            "style" => MajorCategory::Style,
            "source error" | "source issue" => MajorCategory::SourceError,
            "non translation" => MajorCategory::NonTranslation,
            "other" => MajorCategory::Other,
            _ => return None,
        };
        Some(cat)
    }

    /// Subcategories admitted under this major category. Empty means the
    /// category takes no subcategory.
    fn subcategories(self) -> &'static [&'static str] {
        match self {
            MajorCategory::Accuracy => &["addition", "omission", "mistranslation", "untranslated text"],
            MajorCategory::Fluency => &[
                "character encoding",
                "grammar",
                "inconsistency",
                "punctuation",
                "register",
                "spelling",
            ],
            MajorCategory::LocalConvention => &[
                "address format",
                "currency format",
                "date format",
                "name format",
                "telephone format",
                "time format",
            ],
            MajorCategory::Terminology => &["inappropriate for context", "inconsistent use"],
            MajorCategory::Style => &["awkward"],
            _ => &[],
        }
    }
}

impl fmt::Display for MajorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lowercases, drops trailing `!`, and folds `_`/`-` to spaces.
fn canonical_key(label: &str) -> String {
    let t = label.trim().trim_end_matches('!').to_lowercase();
    let t: String = t
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    let mut key = t.split_whitespace().collect::<Vec<_>>().join(" ");
    if key == "untranslated" {
        key = "untranslated text".into();
    }
    key
}

/// An MQM error type: major category plus optional subcategory. The raw
/// label is kept verbatim for round-tripping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorCategory {
    pub major: MajorCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub: Option<String>,
    pub raw: String,
}

impl ErrorCategory {
    /// Parses labels such as `Accuracy/Mistranslation`, `Non-translation!`
    /// or `Style/Awkward`, rejecting combinations outside the MQM hierarchy.
    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let unknown = || CorpusError::UnknownCategory(raw.to_string());
        let (major_label, sub) = match raw.split_once('/') {
            Some((m, s)) => (m, Some(s.trim())),
            None => (raw, None),
        };
        let major = MajorCategory::parse(major_label).ok_or_else(unknown)?;
        let sub = sub.filter(|s| !s.is_empty());
        if let Some(s) = sub {
            if !major.subcategories().contains(&canonical_key(s).as_str()) {
                return Err(unknown());
            }
        }
        Ok(ErrorCategory {
            major,
            sub: sub.map(str::to_string),
            raw: raw.trim().to_string(),
        })
    }

    /// `true` for the Fluency/Punctuation class, which has its own weight.
    pub fn is_punctuation(&self) -> bool {
        self.major == MajorCategory::Fluency
            && self
                .sub
                .as_deref()
                .is_some_and(|s| canonical_key(s) == "punctuation")
    }
}

impl FromStr for ErrorCategory {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCategory::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationSource {
    Mqm,
    InstructScore,
    XComet,
    Demetr,
}

impl AnnotationSource {
    pub fn name(self) -> &'static str {
        match self {
            AnnotationSource::Mqm => "mqm",
            AnnotationSource::InstructScore => "instructscore",
            AnnotationSource::XComet => "xcomet",
            AnnotationSource::Demetr => "demetr",
        }
    }

    /// Human annotation (MQM raters, DEMETR labels) as opposed to an
    /// automatic annotator.
    pub fn is_human(self) -> bool {
        matches!(self, AnnotationSource::Mqm | AnnotationSource::Demetr)
    }
}

impl fmt::Display for AnnotationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnnotationSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mqm" => Ok(AnnotationSource::Mqm),
            "instructscore" => Ok(AnnotationSource::InstructScore),
            "xcomet" => Ok(AnnotationSource::XComet),
            "demetr" => Ok(AnnotationSource::Demetr),
            other => Err(format!("unknown annotation source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    /// Erroneous fragment of the hypothesis. Empty when the annotation is
    /// not located (Neutral rows, whole-segment errors).
    pub span: String,
    /// Byte offset of the span in the hypothesis, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
    pub severity: Severity,
    pub source: AnnotationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater: Option<String>,
}

impl ErrorAnnotation {
    pub fn is_neutral(&self) -> bool {
        self.severity == Severity::Neutral
    }
}

/// Collapses whitespace runs to a single space and trims.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-insensitive substring test used for every span check.
pub fn contains_span(haystack: &str, span: &str) -> bool {
    normalize_ws(haystack).contains(&normalize_ws(span))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub lang: LangPair,
    pub system: String,
    pub source: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub errors: Vec<ErrorAnnotation>,
    /// Sources that annotated this segment, including those that found no
    /// error.
    #[serde(default)]
    pub annotated_by: Vec<AnnotationSource>,
}

impl Segment {
    /// Annotations from one source, in order.
    pub fn errors_from(&self, source: AnnotationSource) -> impl Iterator<Item = &ErrorAnnotation> {
        self.errors.iter().filter(move |e| e.source == source)
    }

    /// Annotations from human sources.
    pub fn human_errors(&self) -> impl Iterator<Item = &ErrorAnnotation> {
        self.errors.iter().filter(|e| e.source.is_human())
    }

    /// At least one non-Neutral annotation from any source.
    pub fn has_error(&self) -> bool {
        self.errors.iter().any(|e| !e.is_neutral())
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.source.trim().is_empty() || self.hypothesis.trim().is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        for e in &self.errors {
            if !e.is_neutral() && !contains_span(&self.hypothesis, &e.span) {
                return Err(CorpusError::SpanNotFound {
                    id: self.id.clone(),
                    span: e.span.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Where a corpus came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub files: Vec<String>,
    pub options: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    segments: Vec<Segment>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate segment ids.
    pub fn new(segments: Vec<Segment>, provenance: Provenance) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(segments.len());
        for s in &segments {
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Corpus {
            segments,
            provenance,
        })
    }

    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, CorpusError> {
        Corpus::new(segments, Provenance::default())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Id to index lookup table.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    /// Distinct language pair codes in first-seen order.
    pub fn lang_codes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.segments {
            if !out.iter().any(|c| c == s.lang.code()) {
                out.push(s.lang.code().to_string());
            }
        }
        out
    }

    /// Concatenates corpora; ids must stay unique.
    pub fn concat(parts: Vec<Corpus>) -> Result<Corpus, CorpusError> {
        let mut prov = Provenance::default();
        let mut segs = Vec::new();
        for p in parts {
            prov.files.extend(p.provenance.files);
            segs.extend(p.segments);
        }
        Corpus::new(segs, prov)
    }

    /// Canonical form: one segment per line.
    pub fn to_jsonl(&self) -> String {
        io::to_jsonl(&self.segments).expect("segments serialize")
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(io::write_jsonl(path, &self.segments)?)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let segments: Vec<Segment> = io::read_jsonl(path)?;
        Corpus::new(
            segments,
            Provenance {
                files: vec![path.display().to_string()],
                options: "jsonl".into(),
            },
        )
    }
}
