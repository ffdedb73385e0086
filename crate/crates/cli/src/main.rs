//! `mtpe`: command-line driver for feedback-guided post-editing runs.
//!
//! Every command writes its resolved arguments to `config.json` in
//! `--out-dir` next to its artifacts. Exit status is 0 on success, 1 when
//! some segments failed and 2 on fatal errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mtpe::analysis::MatchRule;
use mtpe::corpus::{AnnotationSource, RaterPolicy};
use mtpe::datasetgen::{DatasetFeedback, Regime};
use mtpe::feedback::{ComponentMask, FeedbackKind};
use mtpe::gateway::ApiShape;
use mtpe::scoring::ScorePolicy;

#[derive(Debug, Parser)]
#[command(name = "mtpe", version, about = "Post-edit MT output with LLM feedback prompts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Parse annotated corpora into canonical corpus.jsonl.
    Parse(ParseArgs),
    /// MQM penalties and normalized scores per segment.
    Score(ScoreArgs),
    /// Render post-editing prompts without contacting a server.
    Prompt(PromptArgs),
    /// Post-edit hypotheses through an OpenAI-compatible endpoint.
    Postedit(PosteditArgs),
    /// Translate sources from scratch (baseline).
    Translate(TranslateArgs),
    /// BLEU/TER of edited output against the original hypotheses.
    Evaluate(EvaluateArgs),
    /// Per-category error-span resolution.
    Analyze(AnalyzeArgs),
    /// Span overlap between two annotation sources.
    Agreement(AgreementArgs),
    /// Metric change on error-free hypotheses.
    Audit(AuditArgs),
    /// Instruction-tuning dataset and training manifest.
    Dataset(DatasetArgs),
    /// Run the mock completion server.
    MockServe(MockServeArgs),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Directory for config.json and artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ParseArgs {
    /// WMT MQM TSV file.
    #[arg(long)]
    mqm: Option<PathBuf>,
    /// Language pair code of the MQM file, e.g. en-de.
    #[arg(long)]
    lang: Option<String>,
    #[arg(long, default_value = "keep-all")]
    rater_policy: RaterPolicy,
    /// DEMETR records (JSON array or JSONL).
    #[arg(long)]
    demetr: Option<PathBuf>,
    /// Existing canonical corpus to start from.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    instructscore: Option<PathBuf>,
    #[arg(long)]
    xcomet: Option<PathBuf>,
    /// has-error or no-error.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    only_lang: Option<String>,
    #[arg(long)]
    system: Option<String>,
    /// Drop segments sharing a source or hypothesis with this corpus.
    #[arg(long)]
    dedup_against: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON weight table overriding the defaults.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "average")]
    policy: ScorePolicy,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct FeedbackArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// generic, score or fine-grained.
    #[arg(long, default_value = "generic")]
    feedback: FeedbackKind,
    /// Fine-grained components: all, or a list of span,type,severity.
    #[arg(long, default_value = "all")]
    components: ComponentMask,
    /// Annotation source used for score and fine-grained feedback.
    #[arg(long, default_value = "mqm")]
    annotations: AnnotationSource,
    /// Number of in-context examples.
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus to draw in-context examples from (defaults to --corpus).
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Prompt block template file.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "average")]
    policy: ScorePolicy,
    /// JSON object mapping segment ids to feedback kinds.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GenerationArgs {
    #[arg(long, default_value = "http://127.0.0.1:8000/v1")]
    endpoint: String,
    #[arg(long, default_value = "llama-2-13b-chat")]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 256)]
    max_tokens: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// completion or chat.
    #[arg(long, default_value = "completion")]
    api: ApiShape,
    /// Sampling seed forwarded to the server.
    #[arg(long)]
    request_seed: Option<u64>,
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
}

#[derive(Debug, Args, Serialize)]
struct PromptArgs {
    #[command(flatten)]
    feedback: FeedbackArgs,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct PosteditArgs {
    #[command(flatten)]
    feedback: FeedbackArgs,
    #[command(flatten)]
    generation: GenerationArgs,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct TranslateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    generation: GenerationArgs,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// records.jsonl from postedit or translate.
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lowercase: bool,
    /// Command line of a COMET scoring process (optional).
    #[arg(long)]
    comet_cmd: Option<String>,
    #[arg(long, default_value_t = 600)]
    comet_timeout_secs: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    records: PathBuf,
    /// Also write resolution.csv.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct AgreementArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    a: AnnotationSource,
    #[arg(long)]
    b: AnnotationSource,
    /// exact or jaccard:THETA.
    #[arg(long, default_value = "exact")]
    rule: MatchRule,
    /// Sample this many segments.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct AuditArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    lowercase: bool,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct DatasetArgs {
    /// Canonical corpora (repeatable).
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    /// generic or fine-grained.
    #[arg(long, default_value = "fine-grained")]
    feedback: DatasetFeedback,
    #[arg(long, default_value_t = 200)]
    dev: usize,
    #[arg(long, default_value_t = 1000)]
    test: usize,
    /// Cap on MQM train examples per pair.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bilingual")]
    regime: Regime,
    #[arg(long, default_value = "meta-llama/Llama-2-13b-hf")]
    base_model: String,
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
}

#[derive(Debug, Args, Serialize)]
struct MockServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// echo-reference, identity or scripted.
    #[arg(long, default_value = "echo-reference")]
    mode: String,
    /// JSON object of segment id to output, for scripted mode.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8000")]
    addr: String,
    #[arg(long, default_value_t = 0)]
    fail_first: u32,
    #[arg(long)]
    with_cue: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.command) {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial(n)) => {
            eprintln!("warning: {n} segment(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
