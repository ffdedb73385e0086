use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use mtpe::analysis::{self, AgreementReport, AuditReport, ResolutionReport};
use mtpe::corpus::{
    corpus_stats, dedup_against, filter_segments, parse_demetr, parse_external_annotations, parse_mqm_tsv,
    AnnotationSource, Corpus, Filter, LangPair, MqmParseOptions, Segment,
};
use mtpe::datasetgen::{self, SplitPlan, TrainingManifest};
use mtpe::feedback::{build_translate_prompt, FeedbackKind, FeedbackSpec, PromptBuilder, PromptTemplate, Shot};
use mtpe::gateway::mock::{MockMode, MockOptions, MockServer};
use mtpe::gateway::{Gateway, GenerationConfig, PostEditRecord, PromptJob};
use mtpe::io;
use mtpe::metrics::comet::{CometBridge, ScoreRequest};
use mtpe::metrics::{self, paired_bootstrap, MetricReport, SignificanceResult, TokenizerConfig};
use mtpe::scoring::WeightTable;

use crate::{
    AgreementArgs, AnalyzeArgs, AuditArgs, Command, DatasetArgs, EvaluateArgs, FeedbackArgs, GenerationArgs,
    MockServeArgs, ParseArgs, PosteditArgs, PromptArgs, ScoreArgs, TranslateArgs,
};

pub enum Outcome {
    Complete,
    /// Number of failed segments.
    Partial(usize),
}

fn outcome(failed: usize) -> Outcome {
    if failed == 0 {
        Outcome::Complete
    } else {
        Outcome::Partial(failed)
    }
}

pub fn run(cmd: &Command) -> Result<Outcome> {
    let out_dir = match cmd {
        Command::Parse(a) => Some(&a.out.out_dir),
        Command::Score(a) => Some(&a.out.out_dir),
        Command::Prompt(a) => Some(&a.out.out_dir),
        Command::Postedit(a) => Some(&a.out.out_dir),
        Command::Translate(a) => Some(&a.out.out_dir),
        Command::Evaluate(a) => Some(&a.out.out_dir),
        Command::Analyze(a) => Some(&a.out.out_dir),
        Command::Agreement(a) => Some(&a.out.out_dir),
        Command::Audit(a) => Some(&a.out.out_dir),
        Command::Dataset(a) => Some(&a.out.out_dir),
        Command::MockServe(_) => None,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let config = json!({ "version": env!("CARGO_PKG_VERSION"), "run": cmd });
        io::write_json(&dir.join("config.json"), &config)?;
    }
    match cmd {
        Command::Parse(a) => parse(a),
        Command::Score(a) => score(a),
        Command::Prompt(a) => prompt(a),
        Command::Postedit(a) => postedit(a),
        Command::Translate(a) => translate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Analyze(a) => analyze(a),
        Command::Agreement(a) => agreement(a),
        Command::Audit(a) => audit(a),
        Command::Dataset(a) => dataset(a),
        Command::MockServe(a) => mock_serve(a),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::read_jsonl(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_records(path: &Path) -> Result<Vec<PostEditRecord>> {
    io::read_jsonl(path).with_context(|| format!("reading records {}", path.display()))
}

fn write_report<T: Serialize>(dir: &Path, value: &T) -> Result<()> {
    Ok(io::write_json(&dir.join("report.json"), value)?)
}

fn parse(a: &ParseArgs) -> Result<Outcome> {
    let mut parts = Vec::new();
    if let Some(path) = &a.corpus {
        parts.push(load_corpus(path)?);
    }
    if let Some(path) = &a.mqm {
        let code = a.lang.as_deref().context("--mqm needs --lang")?;
        let lang = LangPair::from_code(code)?;
        let opts = MqmParseOptions {
            rater_policy: a.rater_policy,
        };
        parts.push(parse_mqm_tsv(path, &lang, &opts)?);
    }
    if let Some(path) = &a.demetr {
        parts.push(parse_demetr(path)?);
    }
    if parts.is_empty() {
        bail!("nothing to parse: give --corpus, --mqm or --demetr");
    }
    let mut corpus = Corpus::concat(parts)?;
    if let Some(path) = &a.instructscore {
        corpus = parse_external_annotations(path, AnnotationSource::InstructScore, &corpus)?;
    }
    if let Some(path) = &a.xcomet {
        corpus = parse_external_annotations(path, AnnotationSource::XComet, &corpus)?;
    }
    if let Some(f) = &a.filter {
        let filter = match f.as_str() {
            "has-error" => Filter::HasError,
            "no-error" => Filter::NoError,
            other => bail!("unknown filter {other:?} (has-error or no-error)"),
        };
        corpus = filter_segments(&corpus, &filter);
    }
    if let Some(code) = &a.only_lang {
        corpus = filter_segments(&corpus, &Filter::LangPair(code.clone()));
    }
    if let Some(sys) = &a.system {
        corpus = filter_segments(&corpus, &Filter::System(sys.clone()));
    }
    let mut removed = 0;
    if let Some(path) = &a.dedup_against {
        let test = load_corpus(path)?;
        (corpus, removed) = dedup_against(&corpus, &test);
    }
    corpus.write_jsonl(&a.out.out_dir.join("corpus.jsonl"))?;
    let report = json!({
        "segments": corpus.len(),
        "deduplicated": removed,
        "stats": corpus_stats(&corpus),
    });
    write_report(&a.out.out_dir, &report)?;
    println!("{} segments", corpus.len());
    Ok(Outcome::Complete)
}

fn load_weights(path: Option<&PathBuf>) -> Result<WeightTable> {
    Ok(match path {
        Some(p) => WeightTable::from_json_file(p)?,
        None => WeightTable::default(),
    })
}

fn score(a: &ScoreArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let weights = load_weights(a.weights.as_ref())?;
    let mut tsv = String::from("segment_id\tpenalty\tnormalized\tdisplay\n");
    let mut scores = Vec::with_capacity(corpus.len());
    for seg in corpus.segments() {
        let s = weights.score(seg, a.policy);
        tsv.push_str(&format!("{}\t{}\t{}\t{}\n", seg.id, s.penalty, s.normalized, s.display()));
        scores.push(json!({"segment_id": seg.id, "penalty": s.penalty, "normalized": s.normalized}));
    }
    let mean = if scores.is_empty() {
        0.0
    } else {
        corpus
            .segments()
            .iter()
            .map(|s| weights.score(s, a.policy).normalized)
            .sum::<f64>()
            / corpus.len() as f64
    };
    io::write_atomic(&a.out.out_dir.join("segments.tsv"), tsv.as_bytes())?;
    write_report(
        &a.out.out_dir,
        &json!({"segments": corpus.len(), "mean_normalized": mean, "weights": weights, "scores": scores}),
    )?;
    Ok(Outcome::Complete)
}

/// Feedback for `seg` from the chosen annotation source, or `None` when the
/// source has nothing to say about it.
fn spec_for(seg: &Segment, kind: FeedbackKind, fa: &FeedbackArgs, weights: &WeightTable) -> Option<FeedbackSpec> {
    match kind {
        FeedbackKind::Generic => Some(FeedbackSpec::Generic),
        FeedbackKind::Score => {
            if !seg.annotated_by.contains(&fa.annotations) {
                return None;
            }
            let penalty = weights.penalty(seg.errors_from(fa.annotations), fa.policy);
            let normalized = weights.normalize(penalty).ok()?;
            FeedbackSpec::score(normalized).ok()
        }
        FeedbackKind::FineGrained => FeedbackSpec::fine_grained(seg.errors_from(fa.annotations), fa.components).ok(),
    }
}

const KINDS: [FeedbackKind; 3] = [FeedbackKind::Generic, FeedbackKind::Score, FeedbackKind::FineGrained];

fn kind_index(kind: FeedbackKind) -> usize {
    KINDS.iter().position(|k| *k == kind).expect("listed kind")
}

fn build_jobs(corpus: &Corpus, fa: &FeedbackArgs) -> Result<Vec<PromptJob>> {
    let weights = load_weights(fa.weights.as_ref())?;
    let template = match &fa.template {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading template {}", p.display()))?;
            Some(PromptTemplate::new(&text).with_context(|| format!("template {}", p.display()))?)
        }
        None => None,
    };
    let builder = PromptBuilder { template };
    let overrides: HashMap<String, FeedbackKind> = match &fa.overrides {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading overrides {}", p.display()))?;
            let raw: HashMap<String, String> =
                serde_json::from_str(&text).with_context(|| format!("parsing overrides {}", p.display()))?;
            raw.into_iter()
                .map(|(id, k)| Ok((id, k.parse::<FeedbackKind>().map_err(anyhow::Error::msg)?)))
                .collect::<Result<_>>()?
        }
        None => HashMap::new(),
    };
    let pool_corpus = match &fa.pool {
        Some(p) => load_corpus(p)?,
        None => corpus.clone(),
    };
    // Shots carry the same feedback kind as the query they precede.
    let pools: Vec<Vec<Shot>> = KINDS
        .iter()
        .map(|&kind| {
            pool_corpus
                .segments()
                .iter()
                .filter_map(|s| {
                    let gold = s.reference.clone()?;
                    let spec = spec_for(s, kind, fa, &weights)?;
                    Some(Shot {
                        segment: s.clone(),
                        spec,
                        gold,
                    })
                })
                .collect()
        })
        .collect();

    let mut jobs = Vec::with_capacity(corpus.len());
    let mut fallbacks = 0;
    for seg in corpus.segments() {
        let kind = overrides.get(&seg.id).copied().unwrap_or(fa.feedback);
        let spec = spec_for(seg, kind, fa, &weights).unwrap_or_else(|| {
            fallbacks += 1;
            FeedbackSpec::Generic
        });
        let pool = &pools[kind_index(spec.kind())];
        let prompt = builder
            .build(seg, &spec, pool, fa.k, fa.seed)
            .with_context(|| format!("building prompt for segment {}", seg.id))?;
        jobs.push(PromptJob {
            segment_id: seg.id.clone(),
            lang: seg.lang.clone(),
            feedback: spec.kind().name().to_string(),
            k: fa.k,
            prompt,
        });
    }
    if fallbacks > 0 {
        log::warn!(
            "{fallbacks} segment(s) had no {} annotations and got generic feedback",
            fa.annotations
        );
    }
    Ok(jobs)
}

fn prompt(a: &PromptArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.feedback.corpus)?;
    let jobs = build_jobs(&corpus, &a.feedback)?;
    io::write_jsonl(&a.out.out_dir.join("prompts.jsonl"), &jobs)?;
    println!("{} prompts", jobs.len());
    Ok(Outcome::Complete)
}

fn generation_config(g: &GenerationArgs) -> GenerationConfig {
    GenerationConfig {
        endpoint: g.endpoint.clone(),
        model: g.model.clone(),
        temperature: g.temperature,
        top_p: g.top_p,
        max_tokens: g.max_tokens,
        timeout_secs: g.timeout_secs,
        max_retries: g.max_retries,
        max_in_flight: g.max_in_flight,
        api_shape: g.api,
        seed: g.request_seed,
        api_key_env: g.api_key_env.clone(),
        backoff_ms: g.backoff_ms,
    }
}

fn run_jobs(jobs: Vec<PromptJob>, g: &GenerationArgs, out_dir: &Path) -> Result<Outcome> {
    io::write_jsonl(&out_dir.join("prompts.jsonl"), &jobs)?;
    let gateway = Gateway::new(generation_config(g))?;
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    let records = runtime.block_on(gateway.postedit_batch(jobs))?;
    io::write_jsonl(&out_dir.join("records.jsonl"), &records)?;
    let failed = records.iter().filter(|r| r.failed).count();
    let attempts: u32 = records.iter().map(|r| r.attempts).sum();
    write_report(
        out_dir,
        &json!({"segments": records.len(), "failed": failed, "attempts": attempts}),
    )?;
    if !records.is_empty() {
        let total: Duration = records.iter().map(|r| r.latency).sum();
        eprintln!(
            "{} requests, mean latency {:.1} ms",
            records.len(),
            total.as_secs_f64() * 1e3 / records.len() as f64
        );
    }
    Ok(outcome(failed))
}

fn postedit(a: &PosteditArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.feedback.corpus)?;
    let jobs = build_jobs(&corpus, &a.feedback)?;
    run_jobs(jobs, &a.generation, &a.out.out_dir)
}

fn translate(a: &TranslateArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let jobs = corpus
        .segments()
        .iter()
        .map(|s| PromptJob {
            segment_id: s.id.clone(),
            lang: s.lang.clone(),
            feedback: "translate".into(),
            k: 0,
            prompt: build_translate_prompt(&s.source, &s.lang),
        })
        .collect();
    run_jobs(jobs, &a.generation, &a.out.out_dir)
}

#[derive(Serialize)]
struct EvaluationReport {
    segments: usize,
    failed: usize,
    baseline: MetricReport,
    postedit: MetricReport,
    delta_bleu: f64,
    delta_ter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_comet: Option<f64>,
    significance: Vec<SignificanceResult>,
}

fn comet_scores(
    bridge: &CometBridge,
    corpus: &Corpus,
    hyps: &[String],
    refs: &[String],
) -> Result<Vec<f64>> {
    let requests: Vec<ScoreRequest> = corpus
        .segments()
        .iter()
        .zip(hyps.iter().zip(refs))
        .map(|(s, (h, r))| ScoreRequest {
            id: s.id.clone(),
            source: s.source.clone(),
            hypothesis: h.clone(),
            reference: r.clone(),
        })
        .collect();
    Ok(bridge.score(&requests)?)
}

fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let records = load_records(&a.records)?;
    let (before, after, refs, failed) = analysis::aligned_outputs(&corpus, &records)?;
    let cfg = TokenizerConfig {
        lowercase: a.lowercase,
    };
    let mut base = metrics::evaluate(&before, &refs, cfg)?;
    let mut post = metrics::evaluate(&after, &refs, cfg)?;
    let mut significance = Vec::new();
    let mut delta_comet = None;

    if let Some(cmd) = &a.comet_cmd {
        let bridge = CometBridge::from_command_line(cmd, Duration::from_secs(a.comet_timeout_secs))
            .context("empty --comet-cmd")?;
        match (
            comet_scores(&bridge, &corpus, &before, &refs),
            comet_scores(&bridge, &corpus, &after, &refs),
        ) {
            (Ok(b), Ok(p)) => {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
                base.comet = Some(mean(&b));
                post.comet = Some(mean(&p));
                delta_comet = Some(mean(&p) - mean(&b));
                base.comet_per_segment = Some(b);
                post.comet_per_segment = Some(p);
            }
            (Err(e), _) | (_, Err(e)) => log::warn!("COMET scoring skipped: {e:#}"),
        }
    }

    if corpus.len() >= 2 {
        significance.push(paired_bootstrap(
            "bleu",
            &post.bleu_per_segment,
            &base.bleu_per_segment,
            a.resamples,
            a.seed,
        )?);
        significance.push(paired_bootstrap(
            "ter",
            &post.ter_per_segment,
            &base.ter_per_segment,
            a.resamples,
            a.seed,
        )?);
        if let (Some(p), Some(b)) = (&post.comet_per_segment, &base.comet_per_segment) {
            significance.push(paired_bootstrap("comet", p, b, a.resamples, a.seed)?);
        }
    } else {
        log::warn!("fewer than two segments; significance tests skipped");
    }

    let mut tsv = String::from("segment_id\tbleu_before\tbleu_after\tter_before\tter_after\n");
    for (i, seg) in corpus.segments().iter().enumerate() {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            seg.id, base.bleu_per_segment[i], post.bleu_per_segment[i], base.ter_per_segment[i], post.ter_per_segment[i]
        ));
    }
    io::write_atomic(&a.out.out_dir.join("segments.tsv"), tsv.as_bytes())?;

    println!(
        "BLEU {:.4} -> {:.4}   TER {:.4} -> {:.4}",
        base.bleu, post.bleu, base.ter, post.ter
    );
    let report = EvaluationReport {
        segments: corpus.len(),
        failed,
        delta_bleu: post.bleu - base.bleu,
        delta_ter: post.ter - base.ter,
        delta_comet,
        baseline: base,
        postedit: post,
        significance,
    };
    write_report(&a.out.out_dir, &report)?;
    Ok(outcome(failed))
}

fn analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let records = load_records(&a.records)?;
    let report: ResolutionReport = analysis::resolution_analysis(&corpus, &records)?;
    print!("{}", report.table());
    if a.csv {
        io::write_atomic(&a.out.out_dir.join("resolution.csv"), report.to_csv().as_bytes())?;
    }
    write_report(&a.out.out_dir, &report)?;
    Ok(outcome(report.skipped_failed))
}

fn agreement(a: &AgreementArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let report: AgreementReport =
        analysis::agreement(&corpus, a.a, a.b, a.rule, a.sample.map(|n| (n, a.seed)))?;
    println!(
        "{} vs {} ({}): {}/{}",
        report.source_a, report.source_b, report.rule, report.overlap, report.sample_size
    );
    write_report(&a.out.out_dir, &report)?;
    Ok(Outcome::Complete)
}

fn audit(a: &AuditArgs) -> Result<Outcome> {
    let corpus = filter_segments(&load_corpus(&a.corpus)?, &Filter::NoError);
    let keep = corpus.index();
    let records: Vec<PostEditRecord> = load_records(&a.records)?
        .into_iter()
        .filter(|r| keep.contains_key(r.segment_id.as_str()))
        .collect();
    let cfg = TokenizerConfig {
        lowercase: a.lowercase,
    };
    let report: AuditReport = analysis::overedit_audit(&corpus, &records, cfg)?;
    println!(
        "{} error-free segments, {} changed: BLEU {:+.4}, TER {:+.4}",
        report.segments, report.changed, report.delta_bleu, report.delta_ter
    );
    write_report(&a.out.out_dir, &report)?;
    Ok(outcome(report.failed))
}

fn dataset(a: &DatasetArgs) -> Result<Outcome> {
    let corpora = a.corpus.iter().map(|p| load_corpus(p)).collect::<Result<Vec<_>>>()?;
    let plan = SplitPlan {
        dev: a.dev,
        test: a.test,
        train: a.train,
        seed: a.seed,
        ..Default::default()
    };
    let data = datasetgen::build_instruction_dataset(&corpora, &plan, a.feedback)?;
    let mut files = Vec::new();
    for (name, examples) in datasetgen::partition(&data.examples, a.regime) {
        datasetgen::export_jsonl(&examples, &a.out.out_dir.join(&name))?;
        files.push(json!({"file": name, "examples": examples.len()}));
    }
    let manifest: TrainingManifest =
        datasetgen::export_training_manifest(a.regime, &a.base_model, &a.out.out_dir.join("manifest.json"))?;
    write_report(
        &a.out.out_dir,
        &json!({"counts": data.counts, "files": files, "manifest": manifest}),
    )?;
    for (code, c) in &data.counts {
        println!(
            "{code}: train {}+{} dev {} test {} (dropped {})",
            c.train_mqm, c.train_demetr, c.dev, c.test, c.deduplicated
        );
    }
    Ok(Outcome::Complete)
}

fn mock_serve(a: &MockServeArgs) -> Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let mode = match a.mode.as_str() {
        "echo-reference" => MockMode::EchoReference,
        "identity" => MockMode::Identity,
        "scripted" => {
            let path = a.script.as_ref().context("scripted mode needs --script")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            MockMode::Scripted(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        other => bail!("unknown mock mode {other:?}"),
    };
    let mut opts = MockOptions::new(mode);
    opts.fail_first = a.fail_first;
    opts.with_cue = a.with_cue;
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(async {
        let server = MockServer::start(&corpus, opts, &a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        println!("serving {} segments at {}", corpus.len(), server.base_url());
        server.wait().await;
        Ok(Outcome::Complete)
    })
}
