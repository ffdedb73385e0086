//! Feedback rendering and post-editing prompt assembly.
//!
//! A query block has the shape
//!
//! ```text
//! Improve the translation from English to German without any explanation.
//! English: The newer items are bagged only.
//! German: Neue Gegenstände werden nur mit Gepäck versehen.
//! Improved German:
//! ```
//!
//! Score feedback appends `This translation is scored N out of 100.` to the
//! instruction; fine-grained feedback switches to the "based on the
//! identified errors" instruction and inserts one numbered line per error.
//! Few-shot prompts prepend `k` complete blocks, each answered with its gold
//! translation, separated by blank lines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ErrorAnnotation, LangPair, Segment};
use crate::sampling;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeedbackError {
    #[error("fine-grained feedback needs at least one non-neutral annotation")]
    EmptyAnnotations,
    #[error("fine-grained feedback needs at least one component")]
    EmptyMask,
    #[error("score {0} outside [0, 100]")]
    ScoreOutOfRange(f64),
    #[error("requested {k} shots but only {available} eligible exemplars")]
    NotEnoughShots { k: usize, available: usize },
    #[error("invalid component mask {0:?}")]
    BadMask(String),
    #[error("template: {0}")]
    BadTemplate(String),
}

/// Which components of an error annotation fine-grained feedback shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMask {
    pub span: bool,
    #[serde(rename = "type")]
    pub kind: bool,
    pub severity: bool,
}

impl ComponentMask {
    pub const ALL: ComponentMask = ComponentMask {
        span: true,
        kind: true,
        severity: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.span || self.kind || self.severity)
    }
}

impl Default for ComponentMask {
    fn default() -> Self {
        ComponentMask::ALL
    }
}

impl FromStr for ComponentMask {
    type Err = FeedbackError;
    /// `all`, or a comma list drawn from `span`, `type`, `severity`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "all" {
            return Ok(ComponentMask::ALL);
        }
        let mut m = ComponentMask {
            span: false,
            kind: false,
            severity: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "span" => m.span = true,
                "type" => m.kind = true,
                "severity" => m.severity = true,
                _ => return Err(FeedbackError::BadMask(s.to_string())),
            }
        }
        if m.is_empty() {
            return Err(FeedbackError::BadMask(s.to_string()));
        }
        Ok(m)
    }
}

impl fmt::Display for ComponentMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.span, "span"),
            (self.kind, "type"),
            (self.severity, "severity"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&parts.join(","))
    }
}

/// Feedback granularity without the per-segment payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackKind {
    Generic,
    Score,
    FineGrained,
}

impl FeedbackKind {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackKind::Generic => "generic",
            FeedbackKind::Score => "score",
            FeedbackKind::FineGrained => "fine-grained",
        }
    }
}

impl FromStr for FeedbackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(FeedbackKind::Generic),
            "score" => Ok(FeedbackKind::Score),
            "fine-grained" | "fine_grained" | "finegrained" => Ok(FeedbackKind::FineGrained),
            other => Err(format!("unknown feedback kind {other:?}")),
        }
    }
}

impl fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackSpec {
    Generic,
    /// Normalized quality score in [0, 100].
    Score(f64),
    FineGrained {
        annotations: Vec<ErrorAnnotation>,
        mask: ComponentMask,
    },
}

impl FeedbackSpec {
    pub fn score(value: f64) -> Result<Self, FeedbackError> {
        if !(0.0..=100.0).contains(&value) {
            return Err(FeedbackError::ScoreOutOfRange(value));
        }
        Ok(FeedbackSpec::Score(value))
    }

    /// Keeps the non-neutral annotations; fails if none remain.
    pub fn fine_grained<'a>(
        annotations: impl IntoIterator<Item = &'a ErrorAnnotation>,
        mask: ComponentMask,
    ) -> Result<Self, FeedbackError> {
        if mask.is_empty() {
            return Err(FeedbackError::EmptyMask);
        }
        let annotations: Vec<ErrorAnnotation> = annotations
            .into_iter()
            .filter(|a| !a.is_neutral())
            .cloned()
            .collect();
        if annotations.is_empty() {
            return Err(FeedbackError::EmptyAnnotations);
        }
        Ok(FeedbackSpec::FineGrained { annotations, mask })
    }

    pub fn kind(&self) -> FeedbackKind {
        match self {
            FeedbackSpec::Generic => FeedbackKind::Generic,
            FeedbackSpec::Score(_) => FeedbackKind::Score,
            FeedbackSpec::FineGrained { .. } => FeedbackKind::FineGrained,
        }
    }
}

/// How the error type is worded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeStyle {
    /// Subcategory if present, else the major category ("mistranslation").
    Subcategory,
    /// The full raw label ("accuracy/mistranslation").
    FullLabel,
}

fn type_word(ann: &ErrorAnnotation, style: TypeStyle) -> Option<String> {
    let cat = ann.category.as_ref()?;
    let word = match style {
        TypeStyle::Subcategory => cat.sub.clone().unwrap_or_else(|| cat.major.label().to_string()),
        TypeStyle::FullLabel => cat.raw.clone(),
    };
    Some(word.trim().to_lowercase())
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// One error sentence, omitting whatever the mask or the annotation lacks.
pub fn error_sentence(ann: &ErrorAnnotation, mask: ComponentMask, style: TypeStyle) -> String {
    let severity = mask.severity.then(|| ann.severity.word().to_string());
    let kind = if mask.kind { type_word(ann, style) } else { None };
    let span = (mask.span && !ann.span.is_empty()).then_some(ann.span.as_str());
    let descriptor: Vec<String> = severity.into_iter().chain(kind).collect();
    let mut out = if descriptor.is_empty() {
        "There is an error".to_string()
    } else {
        let d = descriptor.join(" ");
        format!("There is {} {d} error", article(&d))
    };
    match span {
        Some(s) => out.push_str(&format!(" at ``{s}''.")),
        None => out.push('.'),
    }
    out
}

fn generic_instruction(lang: &LangPair) -> String {
    format!(
        "Improve the translation from {} to {} without any explanation.",
        lang.src(),
        lang.tgt()
    )
}

/// Instruction line and numbered error lines for a feedback spec.
pub fn render_feedback(
    spec: &FeedbackSpec,
    lang: &LangPair,
) -> Result<(String, Vec<String>), FeedbackError> {
    match spec {
        FeedbackSpec::Generic => Ok((generic_instruction(lang), Vec::new())),
        FeedbackSpec::Score(v) => {
            if !(0.0..=100.0).contains(v) {
                return Err(FeedbackError::ScoreOutOfRange(*v));
            }
            Ok((
                format!(
                    "{} This translation is scored {} out of 100.",
                    generic_instruction(lang),
                    v.round() as i64
                ),
                Vec::new(),
            ))
        }
        FeedbackSpec::FineGrained { annotations, mask } => {
            if mask.is_empty() {
                return Err(FeedbackError::EmptyMask);
            }
            let lines: Vec<String> = annotations
                .iter()
                .filter(|a| !a.is_neutral())
                .enumerate()
                .map(|(i, a)| format!("({}) {}", i + 1, error_sentence(a, *mask, TypeStyle::Subcategory)))
                .collect();
            if lines.is_empty() {
                return Err(FeedbackError::EmptyAnnotations);
            }
            Ok((
                format!(
                    "Improve the translation from {} to {} based on the identified errors without any explanation.",
                    lang.src(),
                    lang.tgt()
                ),
                lines,
            ))
        }
    }
}

/// A few-shot exemplar: a segment, its feedback and the answer shown for it.
#[derive(Debug, Clone)]
pub struct Shot {
    pub segment: Segment,
    pub spec: FeedbackSpec,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub instruction_line: String,
    pub error_lines: Vec<String>,
    pub source_line: String,
    pub hypothesis_line: String,
    pub cue_line: String,
    pub shots: Vec<(PromptBundle, String)>,
    pub rng_seed: u64,
    /// Score value for template overrides.
    score: Option<i64>,
    parts: BlockParts,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockParts {
    src_lang: String,
    tgt_lang: String,
    source: String,
    hypothesis: String,
}

impl PromptBundle {
    fn query(seg: &Segment, spec: &FeedbackSpec, seed: u64) -> Result<Self, FeedbackError> {
        let (instruction_line, error_lines) = render_feedback(spec, &seg.lang)?;
        let lang = &seg.lang;
        Ok(PromptBundle {
            instruction_line,
            error_lines,
            source_line: format!("{}: {}", lang.src(), seg.source),
            hypothesis_line: format!("{}: {}", lang.tgt(), seg.hypothesis),
            cue_line: format!("Improved {}:", lang.tgt()),
            shots: Vec::new(),
            rng_seed: seed,
            score: match spec {
                FeedbackSpec::Score(v) => Some(v.round() as i64),
                _ => None,
            },
            parts: BlockParts {
                src_lang: lang.src().to_string(),
                tgt_lang: lang.tgt().to_string(),
                source: seg.source.clone(),
                hypothesis: seg.hypothesis.clone(),
            },
        })
    }

    fn block(&self, template: Option<&PromptTemplate>) -> String {
        if let Some(t) = template {
            return t.render(self);
        }
        let mut lines: Vec<&str> = vec![&self.instruction_line];
        lines.extend(self.error_lines.iter().map(String::as_str));
        lines.push(&self.source_line);
        lines.push(&self.hypothesis_line);
        lines.push(&self.cue_line);
        lines.join("\n")
    }

    /// Shots first, each closed with its answer, then the bare query.
    pub fn render_with(&self, template: Option<&PromptTemplate>) -> String {
        let mut blocks: Vec<String> = self
            .shots
            .iter()
            .map(|(b, gold)| format!("{} {gold}", b.block(template)))
            .collect();
        blocks.push(self.block(template));
        blocks.join("\n\n")
    }

    pub fn render(&self) -> String {
        self.render_with(None)
    }
}

/// User-supplied block template with `{SRC_LANG}`, `{TGT_LANG}`, `{SOURCE}`,
/// `{HYP}`, `{ERRORS}` and `{SCORE}` placeholders. A line holding only a
/// placeholder that renders empty is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

const PLACEHOLDERS: [&str; 6] = ["{SRC_LANG}", "{TGT_LANG}", "{SOURCE}", "{HYP}", "{ERRORS}", "{SCORE}"];

impl PromptTemplate {
    pub fn new(text: &str) -> Result<Self, FeedbackError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        for (i, _) in text.match_indices('{') {
            if !PLACEHOLDERS.iter().any(|p| text[i..].starts_with(p)) {
                let end = text[i..].find('}').map_or(text.len(), |e| i + e + 1);
                return Err(FeedbackError::BadTemplate(format!(
                    "unknown placeholder {:?}",
                    &text[i..end]
                )));
            }
        }
        if !text.contains("{HYP}") {
            return Err(FeedbackError::BadTemplate("template must contain {HYP}".into()));
        }
        Ok(PromptTemplate {
            text: text.to_string(),
        })
    }

    fn render(&self, b: &PromptBundle) -> String {
        let errors = b.error_lines.join("\n");
        let score = b.score.map(|s| s.to_string()).unwrap_or_default();
        let values = [
            b.parts.src_lang.as_str(),
            b.parts.tgt_lang.as_str(),
            b.parts.source.as_str(),
            b.parts.hypothesis.as_str(),
            errors.as_str(),
            score.as_str(),
        ];
        let mut out = Vec::new();
        for line in self.text.split('\n') {
            let mut rendered = line.to_string();
            for (p, v) in PLACEHOLDERS.iter().zip(values) {
                rendered = rendered.replace(p, v);
            }
            let only_placeholder = PLACEHOLDERS.contains(&line.trim());
            if only_placeholder && rendered.trim().is_empty() {
                continue;
            }
            out.push(rendered);
        }
        out.join("\n")
    }
}

/// Assembles post-editing prompts, optionally from an override template.
#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    pub template: Option<PromptTemplate>,
}

impl PromptBuilder {
    /// Selects `k` shots from `pool` (never the query itself) with a stream
    /// keyed by `(seed, seg.id)` and assembles the bundle.
    pub fn bundle(
        &self,
        seg: &Segment,
        spec: &FeedbackSpec,
        pool: &[Shot],
        k: usize,
        seed: u64,
    ) -> Result<PromptBundle, FeedbackError> {
        let mut bundle = PromptBundle::query(seg, spec, seed)?;
        if k == 0 {
            return Ok(bundle);
        }
        let eligible: Vec<&Shot> = pool.iter().filter(|s| s.segment.id != seg.id).collect();
        if k > eligible.len() {
            return Err(FeedbackError::NotEnoughShots {
                k,
                available: eligible.len(),
            });
        }
        let mut rng = sampling::keyed_rng(seed, &seg.id);
        for i in sampling::sample_indices(&mut rng, eligible.len(), k) {
            let shot = eligible[i];
            let b = PromptBundle::query(&shot.segment, &shot.spec, seed)?;
            bundle.shots.push((b, shot.gold.clone()));
        }
        Ok(bundle)
    }

    pub fn build(
        &self,
        seg: &Segment,
        spec: &FeedbackSpec,
        pool: &[Shot],
        k: usize,
        seed: u64,
    ) -> Result<String, FeedbackError> {
        Ok(self
            .bundle(seg, spec, pool, k, seed)?
            .render_with(self.template.as_ref()))
    }
}

/// Default-template post-editing prompt.
pub fn build_postedit_prompt(
    seg: &Segment,
    spec: &FeedbackSpec,
    pool: &[Shot],
    k: usize,
    seed: u64,
) -> Result<String, FeedbackError> {
    PromptBuilder::default().build(seg, spec, pool, k, seed)
}

/// Translate-from-scratch baseline prompt.
pub fn build_translate_prompt(source: &str, lang: &LangPair) -> String {
    format!(
        "Translate from {src} to {tgt} without any explanation.\n{src}: {source}\n{tgt}:",
        src = lang.src(),
        tgt = lang.tgt()
    )
}
