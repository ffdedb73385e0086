//! Instruction-tuning data and training manifests.
//!
//! Every example uses the skeleton
//!
//! ```text
//! ### {Src}: {source}
//! ### {Tgt}: {hypothesis}
//! ### Errors: {errors}
//!
//! ### Improved {Tgt}:
//! ```
//!
//! with the reference as the completion. MQM segments of each pair are split
//! into test, dev and train; DEMETR segments only ever join train. Train
//! examples sharing a source, hypothesis or completion with a test example
//! are dropped.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSource, Corpus, LangPair, Segment};
use crate::feedback::{error_sentence, ComponentMask, TypeStyle};
use crate::io::{self, IoError};
use crate::sampling;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{lang}: plan needs {needed} MQM segments but only {available} are usable")]
    PlanTooLarge {
        lang: String,
        needed: usize,
        available: usize,
    },
    #[error("segment {0:?} has no reference to use as completion")]
    MissingReference(String),
    #[error("instruction does not match the skeleton: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Origin {
    Mqm,
    Demetr,
}

/// One line of the exported dataset. Field order is the export order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructExample {
    pub instruction: String,
    pub output: String,
    pub lang: LangPair,
    pub split: Split,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFeedback {
    Generic,
    #[default]
    FineGrained,
}

impl std::str::FromStr for DatasetFeedback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(DatasetFeedback::Generic),
            "fine-grained" | "fine_grained" => Ok(DatasetFeedback::FineGrained),
            _ => Err(format!("unknown dataset feedback {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    pub dev: usize,
    pub test: usize,
    /// Cap on MQM train examples; `None` keeps all that remain.
    pub train: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub dev: usize,
    pub test: usize,
    pub train: Option<usize>,
    /// Per-pair overrides keyed by pair code.
    #[serde(default)]
    pub pairs: BTreeMap<String, PairPlan>,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            dev: 200,
            test: 1000,
            train: None,
            pairs: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn for_pair(&self, code: &str) -> PairPlan {
        self.pairs.get(code).copied().unwrap_or(PairPlan {
            dev: self.dev,
            test: self.test,
            train: self.train,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Bilingual,
    Multilingual,
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilingual" => Ok(Regime::Bilingual),
            "multilingual" => Ok(Regime::Multilingual),
            _ => Err(format!("unknown regime {s:?}")),
        }
    }
}

fn origin_of(seg: &Segment) -> Origin {
    if seg.annotated_by.contains(&AnnotationSource::Demetr) {
        Origin::Demetr
    } else {
        Origin::Mqm
    }
}

/// The Errors payload for a segment: human annotations in order, or "None."
pub fn errors_payload(seg: &Segment) -> String {
    let lines: Vec<String> = seg
        .human_errors()
        .filter(|a| !a.is_neutral())
        .map(|a| error_sentence(a, ComponentMask::ALL, TypeStyle::FullLabel))
        .collect();
    if lines.is_empty() {
        "None.".into()
    } else {
        lines.join(" ")
    }
}

pub fn render_instruction(seg: &Segment, feedback: DatasetFeedback) -> String {
    let lang = &seg.lang;
    let errors = match feedback {
        DatasetFeedback::FineGrained => errors_payload(seg),
        DatasetFeedback::Generic => format!(
            "Improve the translation from {} to {} without any explanation.",
            lang.src(),
            lang.tgt()
        ),
    };
    format!(
        "### {src}: {}\n### {tgt}: {}\n### Errors: {errors}\n\n### Improved {tgt}:",
        seg.source,
        seg.hypothesis,
        src = lang.src(),
        tgt = lang.tgt()
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: String,
    pub hypothesis: String,
    pub errors: String,
}

static SKELETON: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\A### ([^:\n]+): ([^\n]*)\n### ([^:\n]+): ([^\n]*)\n### Errors: ([^\n]*)\n\n### Improved ([^:\n]+):\z")
        .expect("valid regex")
});

/// Validates an instruction against the skeleton and splits it into parts.
pub fn parse_instruction(text: &str) -> Result<ParsedInstruction, DatasetError> {
    let caps = SKELETON
        .captures(text)
        .ok_or_else(|| DatasetError::Malformed(text.chars().take(80).collect()))?;
    if caps[3] != caps[6] {
        return Err(DatasetError::Malformed(format!(
            "target language {:?} vs cue {:?}",
            &caps[3], &caps[6]
        )));
    }
    Ok(ParsedInstruction {
        src_lang: caps[1].to_string(),
        tgt_lang: caps[3].to_string(),
        source: caps[2].to_string(),
        hypothesis: caps[4].to_string(),
        errors: caps[5].to_string(),
    })
}

fn example(seg: &Segment, split: Split, feedback: DatasetFeedback) -> Result<InstructExample, DatasetError> {
    let output = seg
        .reference
        .as_deref()
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| DatasetError::MissingReference(seg.id.clone()))?;
    Ok(InstructExample {
        instruction: render_instruction(seg, feedback),
        output: output.to_string(),
        lang: seg.lang.clone(),
        split,
        origin: origin_of(seg),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_mqm: usize,
    pub train_demetr: usize,
    pub dev: usize,
    pub test: usize,
    /// Train candidates dropped for overlapping the test split.
    pub deduplicated: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<InstructExample>,
    pub counts: BTreeMap<String, SplitCounts>,
}

/// Builds examples for every pair found in `corpora`.
///
/// Per pair, MQM segments are shuffled with a stream keyed by the pair code
/// and cut into test, dev and train in that order. Train then takes every
/// DEMETR segment of the pair, and loses anything sharing a source,
/// hypothesis or reference with test. Output order is pair code, then
/// test, dev, train. Segments lacking a reference are skipped.
pub fn build_instruction_dataset(
    corpora: &[Corpus],
    plan: &SplitPlan,
    feedback: DatasetFeedback,
) -> Result<Dataset, DatasetError> {
    let mut by_pair: BTreeMap<String, (Vec<&Segment>, Vec<&Segment>)> = BTreeMap::new();
    for seg in corpora.iter().flat_map(|c| c.segments()) {
        if seg.reference.as_deref().is_none_or(|r| r.trim().is_empty()) {
            log::warn!("skipping {}: no reference", seg.id);
            continue;
        }
        let entry = by_pair.entry(seg.lang.code().to_string()).or_default();
        match origin_of(seg) {
            Origin::Mqm => entry.0.push(seg),
            Origin::Demetr => entry.1.push(seg),
        }
    }

    let mut out = Dataset::default();
    for (code, (mut mqm, demetr)) in by_pair {
        let pp = plan.for_pair(&code);
        let held_out = pp.dev + pp.test;
        if held_out > mqm.len() {
            return Err(DatasetError::PlanTooLarge {
                lang: code,
                needed: held_out,
                available: mqm.len(),
            });
        }
        let mut rng = sampling::keyed_rng(plan.seed, &code);
        sampling::shuffle(&mut rng, &mut mqm);
        let (test, rest) = mqm.split_at(pp.test);
        let (dev, train_mqm) = rest.split_at(pp.dev);

        let mut blocked: HashSet<&str> = HashSet::new();
        for s in test {
            blocked.insert(s.source.trim());
            blocked.insert(s.hypothesis.trim());
            blocked.insert(s.reference.as_deref().unwrap_or_default().trim());
        }
        let clean = |s: &&&Segment| {
            !blocked.contains(s.source.trim())
                && !blocked.contains(s.hypothesis.trim())
                && !blocked.contains(s.reference.as_deref().unwrap_or_default().trim())
        };
        let mut counts = SplitCounts {
            test: test.len(),
            dev: dev.len(),
            ..Default::default()
        };
        let mut kept_mqm: Vec<&Segment> = train_mqm.iter().filter(clean).copied().collect();
        let kept_demetr: Vec<&Segment> = demetr.iter().filter(clean).copied().collect();
        counts.deduplicated = (train_mqm.len() - kept_mqm.len()) + (demetr.len() - kept_demetr.len());
        if let Some(cap) = pp.train {
            if cap > kept_mqm.len() {
                return Err(DatasetError::PlanTooLarge {
                    lang: code,
                    needed: held_out + cap,
                    available: held_out + kept_mqm.len(),
                });
            }
            kept_mqm.truncate(cap);
        }
        counts.train_mqm = kept_mqm.len();
        counts.train_demetr = kept_demetr.len();

        for s in test {
            out.examples.push(example(s, Split::Test, feedback)?);
        }
        for s in dev {
            out.examples.push(example(s, Split::Dev, feedback)?);
        }
        for s in kept_mqm.iter().chain(&kept_demetr) {
            out.examples.push(example(s, Split::Train, feedback)?);
        }
        out.counts.insert(code, counts);
    }
    Ok(out)
}

/// Groups examples into output files: one per pair and split for the
/// bilingual regime, one per split across pairs for the multilingual one.
pub fn partition(examples: &[InstructExample], regime: Regime) -> BTreeMap<String, Vec<InstructExample>> {
    let mut out: BTreeMap<String, Vec<InstructExample>> = BTreeMap::new();
    for ex in examples {
        let split = serde_json::to_value(ex.split).expect("enum serializes");
        let split = split.as_str().expect("string variant");
        let name = match regime {
            Regime::Bilingual => format!("{}.{split}.jsonl", ex.lang.code()),
            Regime::Multilingual => format!("multilingual.{split}.jsonl"),
        };
        out.entry(name).or_default().push(ex.clone());
    }
    out
}

pub fn export_jsonl(examples: &[InstructExample], path: &Path) -> Result<(), DatasetError> {
    Ok(io::write_jsonl(path, examples)?)
}

pub fn import_jsonl(path: &Path) -> Result<Vec<InstructExample>, DatasetError> {
    Ok(io::read_jsonl(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub base_model: String,
    pub regime: Regime,
    pub method: String,
    pub optimizer: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub grad_accum: u32,
    pub warmup_steps: u32,
    pub epochs: u32,
    /// Evaluation steps without improvement before stopping.
    pub early_stop_patience: u32,
}

impl TrainingManifest {
    pub fn new(regime: Regime, base_model: &str) -> Self {
        TrainingManifest {
            base_model: base_model.to_string(),
            regime,
            method: "qlora".into(),
            optimizer: "adam".into(),
            lora_rank: 16,
            lora_alpha: 32,
            lora_dropout: 0.05,
            learning_rate: 2e-4,
            batch_size: 2,
            grad_accum: 4,
            warmup_steps: 20,
            epochs: 5,
            early_stop_patience: 16,
        }
    }
}

pub fn export_training_manifest(
    regime: Regime,
    base_model: &str,
    path: &Path,
) -> Result<TrainingManifest, DatasetError> {
    let m = TrainingManifest::new(regime, base_model);
    io::write_json(path, &m)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ErrorAnnotation, ErrorCategory, Severity};

    const SRC: &str = "Memorial meetings were organised at the residence of Sam Stafford, one of the agitators who died, and a playground in Guwahati, with attendees resolving to once again to intensify the stir against the Citizenship (Amendment) Act.";
    const HYP: &str = "Gedenkmälerversammlungen wurden in der Residenz von Sam Stafford, einem der gestorbenen Agitatoren, und einem Spielplatz in Guwahati organisiert, wobei die Teilnehmer sich entschlossen hatten, den Aufruhr gegen das Gesetz über die Staatsbürgerschaft (Änderung) erneut zu intensivieren.";
    const REF: &str = "Gedenkveranstaltungen fanden am Wohnsitz von Sam Stafford, einem der getöteten Aktivisten, sowie auf einem Schulhof in Guwahati statt, und die Teilnehmer beschlossen, noch einmal den Protest gegen den CAA zu verstärken.";

    fn memorial_segment() -> Segment {
        Segment {
            id: "ende::1".into(),
            lang: LangPair::from_code("en-de").unwrap(),
            system: "sys".into(),
            source: SRC.into(),
            hypothesis: HYP.into(),
            reference: Some(REF.into()),
            errors: vec![ErrorAnnotation {
                span: "Gedenkmälerversammlungen".into(),
                offset: Some(0),
                category: Some(ErrorCategory::parse("Accuracy/Mistranslation").unwrap()),
                severity: Severity::Minor,
                source: AnnotationSource::Mqm,
                rater: None,
            }],
            annotated_by: vec![AnnotationSource::Mqm],
        }
    }

    #[test]
    fn fine_grained_instruction() {
        let text = render_instruction(&memorial_segment(), DatasetFeedback::FineGrained);
        let want = format!(
            "### English: {SRC}\n### German: {HYP}\n### Errors: There is a minor accuracy/mistranslation error at ``Gedenkmälerversammlungen''.\n\n### Improved German:"
        );
        assert_eq!(text, want);
        let p = parse_instruction(&text).unwrap();
        assert_eq!((p.source.as_str(), p.hypothesis.as_str()), (SRC, HYP));
        assert_eq!(p.tgt_lang, "German");
    }

    #[test]
    fn neutral_and_generic_payloads() {
        let mut seg = memorial_segment();
        seg.errors[0].severity = Severity::Neutral;
        let p = parse_instruction(&render_instruction(&seg, DatasetFeedback::FineGrained)).unwrap();
        assert_eq!(p.errors, "None.");
        let p = parse_instruction(&render_instruction(&seg, DatasetFeedback::Generic)).unwrap();
        assert_eq!(p.errors, "Improve the translation from English to German without any explanation.");
    }

    #[test]
    fn skeleton_rejects_drift() {
        assert!(parse_instruction("### English: a\n### German: b\n### Errors: None.\n### Improved German:").is_err());
        assert!(parse_instruction("### English: a\n### German: b\n### Errors: None.\n\n### Improved French:").is_err());
        assert!(parse_instruction("### English: a\n### German: b\n### Errors: None.\n\n### Improved German: ").is_err());
    }

    fn synthetic(code: &str, n: usize, demetr: usize) -> Corpus {
        let lang = LangPair::from_code(code).unwrap();
        let mut segs = Vec::new();
        for i in 0..n + demetr {
            let d = i >= n;
            segs.push(Segment {
                id: format!("{code}-{i}"),
                lang: lang.clone(),
                system: if d { "demetr".into() } else { "sys".into() },
                source: format!("source {code} {i}"),
                hypothesis: format!("hyp {code} {i}"),
                reference: Some(format!("ref {code} {i}")),
                errors: vec![],
                annotated_by: vec![if d { AnnotationSource::Demetr } else { AnnotationSource::Mqm }],
            });
        }
        Corpus::from_segments(segs).unwrap()
    }

    #[test]
    fn split_counts_and_determinism() {
        let plan = SplitPlan {
            dev: 5,
            test: 10,
            seed: 3,
            ..Default::default()
        };
        let c = synthetic("en-de", 40, 7);
        let a = build_instruction_dataset(std::slice::from_ref(&c), &plan, DatasetFeedback::FineGrained).unwrap();
        let counts = &a.counts["en-de"];
        assert_eq!((counts.test, counts.dev, counts.train_mqm, counts.train_demetr), (10, 5, 25, 7));
        let b = build_instruction_dataset(&[c], &plan, DatasetFeedback::FineGrained).unwrap();
        assert_eq!(a.examples, b.examples);
        assert!(a
            .examples
            .iter()
            .filter(|e| e.origin == Origin::Demetr)
            .all(|e| e.split == Split::Train));
    }

    #[test]
    fn dedup_against_test() {
        let plan = SplitPlan {
            dev: 0,
            test: 1,
            ..Default::default()
        };
        let mut segs = synthetic("en-de", 2, 0).into_segments();
        segs[1].source = segs[0].source.clone();
        let c = Corpus::from_segments(segs).unwrap();
        let d = build_instruction_dataset(&[c], &plan, DatasetFeedback::FineGrained).unwrap();
        assert_eq!(d.counts["en-de"].deduplicated, 1);
        assert_eq!(d.examples.len(), 1);
    }

    #[test]
    fn plan_too_large() {
        let err = build_instruction_dataset(&[synthetic("en-de", 3, 0)], &SplitPlan::default(), DatasetFeedback::Generic)
            .unwrap_err();
        assert!(matches!(err, DatasetError::PlanTooLarge { available: 3, .. }));
    }

    #[test]
    fn export_round_trip_and_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ex = example(&memorial_segment(), Split::Train, DatasetFeedback::FineGrained).unwrap();
        export_jsonl(&[ex.clone(), ex.clone(), ex.clone()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first = text.lines().next().unwrap();
        let pos: Vec<usize> = ["\"instruction\"", "\"output\"", "\"lang\"", "\"split\"", "\"origin\""]
            .iter()
            .map(|k| first.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(import_jsonl(&path).unwrap(), vec![ex.clone(), ex.clone(), ex]);

        export_jsonl(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn manifest_defaults() {
        let m = TrainingManifest::new(Regime::Multilingual, "llama-2-13b");
        assert_eq!((m.lora_rank, m.lora_alpha, m.lora_dropout), (16, 32, 0.05));
        assert_eq!((m.learning_rate, m.batch_size, m.grad_accum, m.warmup_steps), (2e-4, 2, 4, 20));
        assert_eq!((m.epochs, m.early_stop_patience), (5, 16));
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["regime"], "multilingual");
    }
}
