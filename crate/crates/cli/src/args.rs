use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convsafe::ctg::Experiment;
use convsafe::eval::ReportFormat;
use convsafe::scorer::Task;

pub const CONFIG_HELP: &str = "\
Config file grammar: one `key = value` per line, `#` starts a comment.
Keys are long flag names without the leading dashes (`-` and `_` are
interchangeable). Values are TOML scalars: quoted strings, integers,
floats or booleans. Flags given on the command line win over the file.
Keys that belong to other subcommands are ignored; unknown keys are an error.";

#[derive(Debug, Parser)]
#[command(name = "convsafe", version, about = "Offensive-language and stance pipelines for threaded conversations")]
#[command(after_long_help = CONFIG_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Flat key = value config file; see --help for the grammar.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel scoring (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "[EOU]", value_name = "TOKEN")]
    pub eou_token: String,
    /// builtin:DIR (directory with *.model.json) or remote:URL.
    #[arg(long, global = true, value_name = "SPEC")]
    pub scorer: Option<String>,
    /// CSV lexicon with a `kind,pattern` header (default: bundled demo list).
    #[arg(long, global = true, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0.75)]
    pub target_precision: f64,
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse raw thread records and apply preprocessing.
    Ingest(IngestArgs),
    /// Two-stage random + offensive-biased sample for annotation.
    Sample(SampleArgs),
    /// Run the annotation service and UI.
    Serve(ServeArgs),
    /// Gold labels and agreement from worker annotations.
    Aggregate(AggregateArgs),
    /// 70/15/15 train/dev/test split of a thread file.
    Split,
    /// Train an NBOW classifier.
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients on random networks.
    Gradcheck(GradcheckArgs),
    /// Per-slice precision/recall/F1 report.
    Eval(EvalArgs),
    /// Per-class thresholds reaching the target precision on a dev set.
    Calibrate(CalibrateArgs),
    /// High-precision labels for a thread corpus.
    Pseudolabel(PseudolabelArgs),
    /// Label-controlled generation training files.
    CtgBuild(CtgBuildArgs),
    /// Automatic metrics for generated responses.
    Autoeval(AutoevalArgs),
    /// Corpus analyses over gold or pseudo labels.
    Analyze(AnalyzeArgs),
    /// Completion prompts for threads ending in an offensive utterance.
    ExportPrompts(ExportPromptsArgs),
    /// Write the bundled synthetic corpus.
    #[command(hide = true)]
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Sample(_) => "sample",
            Command::Serve(_) => "serve",
            Command::Aggregate(_) => "aggregate",
            Command::Split => "split",
            Command::Train(_) => "train",
            Command::Gradcheck(_) => "gradcheck",
            Command::Eval(_) => "eval",
            Command::Calibrate(_) => "calibrate",
            Command::Pseudolabel(_) => "pseudolabel",
            Command::CtgBuild(_) => "ctg-build",
            Command::Autoeval(_) => "autoeval",
            Command::Analyze(_) => "analyze",
            Command::ExportPrompts(_) => "export-prompts",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, default_value_t = 70)]
    pub max_post_words: usize,
    #[arg(long, default_value_t = 50)]
    pub max_comment_words: usize,
    #[arg(long, default_value = "<URL>")]
    pub url_token: String,
    /// Exit with a data error if any record was skipped.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 500)]
    pub n_random: usize,
    #[arg(long, default_value_t = 500)]
    pub n_offensive: usize,
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CONVSAFE_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "CONVSAFE_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Append-only annotation log.
    #[arg(long, env = "CONVSAFE_STORE", value_name = "PATH")]
    pub store: PathBuf,
    #[arg(long, env = "CONVSAFE_WORKERS_PER_THREAD", default_value_t = 5)]
    pub workers_per_thread: usize,
    #[arg(long, env = "CONVSAFE_LEASE_TTL_MINUTES", default_value_t = 30)]
    pub lease_ttl_minutes: i64,
    /// Static UI directory (default: the bundled placeholder).
    #[arg(long, env = "CONVSAFE_UI_DIR", value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
    /// Target-group vocabulary file (default: bundled list).
    #[arg(long, value_name = "PATH")]
    pub targets: Option<PathBuf>,
    /// Write committed annotations as JSON lines to this path and exit.
    #[arg(long, value_name = "PATH")]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long, default_value_t = 2)]
    pub min_votes: usize,
    /// Agreement report destination (default: stdout).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Ce,
    Wce,
    Cbfocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Learned,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, value_enum, default_value = "ce")]
    pub loss: LossKind,
    /// Training threads (JSON lines).
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Dev threads used for checkpoint selection.
    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,
    /// Aggregated gold labels covering both splits.
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    /// Hidden layer sizes as `H1,H2`.
    #[arg(long, default_value = "256,128", value_parser = parse_hidden)]
    pub hidden: (usize, usize),
    #[arg(long, value_enum, default_value = "mean")]
    pub pooling: PoolingArg,
    /// Pretrained vectors in `token v1 ... vd` text format.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// wCE class weights, comma separated (default 1,100,100 for stance, 1,100 for offensive).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.9999)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

fn parse_hidden(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected H1,H2, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub nets: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Restrict to one task (default: both, as far as gold labels allow).
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
}

#[derive(Debug, Args)]
pub struct PseudolabelArgs {
    #[arg(long, value_name = "PATH")]
    pub offensive_thresholds: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub stance_thresholds: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CtgFormat {
    Atcon,
    Dapt,
}

#[derive(Debug, Args)]
pub struct CtgBuildArgs {
    #[arg(long, value_enum, default_value = "atcon")]
    pub format: CtgFormat,
    #[arg(long, default_value = "both")]
    pub experiment: Experiment,
    /// Target number of examples before the train/dev split.
    #[arg(long, default_value_t = 10_000)]
    pub size: usize,
    /// Control set kept by DAPT, e.g. `[SAFE][NEU]`.
    #[arg(long)]
    pub control: Option<String>,
}

#[derive(Debug, Args)]
pub struct AutoevalArgs {
    /// Input holds `{model, context, response}` lines instead of threads.
    #[arg(long)]
    pub responses: bool,
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    AgreeRates,
    DirectVsContextual,
    Targets,
    Profanity,
    Temporal,
    Stats,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub analysis: Analysis,
    /// Gold labels (all analyses except `temporal`, which reads pseudo labels from --input).
    #[arg(long, value_name = "PATH")]
    pub gold: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Votes a target group needs on an utterance to be counted.
    #[arg(long, default_value_t = 2)]
    pub min_votes: usize,
}

#[derive(Debug, Args)]
pub struct ExportPromptsArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Use gold labels for the final utterance.
    #[arg(long, value_name = "PATH", conflicts_with = "offensive_thresholds")]
    pub gold: Option<PathBuf>,
    /// Use --scorer with these thresholds instead of gold labels.
    #[arg(long, value_name = "PATH")]
    pub offensive_thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n_threads: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_separable: usize,
}
