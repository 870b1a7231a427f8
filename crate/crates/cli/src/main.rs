//! `empref`: build preference datasets from emotion-grounded dialogue
//! corpora and evaluate dialogue generations with feature-based metrics.
//!
//! Exit codes: 0 success, 1 data error (unreadable or inconsistent inputs,
//! failed verification), 2 usage error (bad flags or argument values).

mod commands;
mod config;
mod io_util;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use empref::corpus::Split;
use empref::metrics::feature::PromptMode;
use empref::report::MetricSelection;
use empref::stats::{Alternative, CohensD, Dimension};

/// Wraps every failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag combinations or values: exit 2.
    Usage(String),
    /// Unreadable or inconsistent data: exit 1.
    Data(String),
}

impl From<empref::Error> for CliError {
    fn from(e: empref::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "empref",
    version,
    about = "Preference datasets and feature-based empathy evaluation for dialogue corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus ingestion and export
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Preference dataset construction
    #[command(subcommand)]
    Prefs(PrefsCommand),
    /// Evaluate generations against a corpus
    Eval(EvalArgs),
    /// Two-sample statistical tests
    Stats(StatsArgs),
    /// Aggregate human-evaluation annotation records
    HumanEval(HumanEvalArgs),
    /// Render a report as markdown, CSV or plot data
    Report(ReportArgs),
    /// Recompute a report's aggregates from its per-example file
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Import raw per-split CSV files into the canonical JSON-lines corpus
    Import(CorpusImportArgs),
}

#[derive(Args)]
struct CorpusImportArgs {
    /// Directory containing train.csv / valid.csv / test.csv
    #[arg(long)]
    raw_dir: PathBuf,
    /// Output canonical corpus file (JSON-lines)
    #[arg(long)]
    out: PathBuf,
    /// Keyword-rule file, one malformed-marker substring per line
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Splits to import (default: every split file found)
    #[arg(long, value_delimiter = ',', value_parser = Split::from_str)]
    splits: Option<Vec<Split>>,
}

#[derive(Subcommand)]
enum PrefsCommand {
    /// Build per-epoch preference files from a canonical corpus
    Build(PrefsBuildArgs),
}

#[derive(Args)]
struct PrefsBuildArgs {
    /// Canonical corpus file
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = Split::from_str, default_value = "train")]
    split: Split,
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Opposite-emotion table CSV (label,opposite,source); default is the
    /// shipped table
    #[arg(long)]
    table: Option<PathBuf>,
    /// Optional system-prompt text passed through to every record
    #[arg(long)]
    system: Option<String>,
    /// Output directory for `prefs_<split>_epoch<N>.jsonl` files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Generations file: JSON-lines {"dialogue_id","response"} or plain
    /// text (one response per line, *.txt)
    #[arg(long, conflicts_with = "ground_truth")]
    generations: Option<PathBuf>,
    /// Evaluate the corpus's own ground-truth responses
    #[arg(long)]
    ground_truth: bool,
    /// Canonical corpus file
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_parser = Split::from_str, default_value = "test")]
    split: Split,
    /// Comma-separated metric list
    #[arg(long, default_value = "nidf,iva,diversity,length", value_parser = MetricSelection::parse_list)]
    metrics: MetricSelection,
    /// NRC-VAD lexicon TSV
    #[arg(long)]
    vad: Option<PathBuf>,
    /// NRC emotion-intensity lexicon TSV
    #[arg(long)]
    intensity: Option<PathBuf>,
    /// NIDF table cache; loaded when present, otherwise built from the
    /// corpus and written here
    #[arg(long)]
    nidf_cache: Option<PathBuf>,
    /// Split whose utterances define NIDF document frequencies
    #[arg(long, value_parser = Split::from_str, default_value = "train")]
    nidf_reference: Split,
    #[arg(long, value_parser = PromptMode::from_str, default_value = "all-context")]
    prompt_mode: PromptMode,
    /// Label for this generation source in tables
    #[arg(long, default_value = "generations")]
    model_label: String,
    /// Externally produced empathy-level scores for the generations
    #[arg(long, requires = "epitome_gt")]
    epitome_gen: Option<PathBuf>,
    /// Externally produced empathy-level scores for the ground truth
    #[arg(long, requires = "epitome_gen")]
    epitome_gt: Option<PathBuf>,
    /// Externally produced similarity F-scores
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// Config file (key = value lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write publication-style markdown tables next to the report
    #[arg(long)]
    paper_table: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestKind {
    Permutation,
    Welch,
    Paired,
    Mcnemar,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, value_enum)]
    test: TestKind,
    /// First sample: one number per line, or comma-separated
    #[arg(long)]
    a: PathBuf,
    /// Second sample
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    resamples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = Alternative::from_str, default_value = "two-sided")]
    alternative: Alternative,
    /// Enumerate all assignments instead of resampling (permutation only)
    #[arg(long)]
    exact: bool,
    /// Discordant-pair count below which McNemar uses the exact binomial
    #[arg(long, default_value_t = empref::stats::MCNEMAR_EXACT_THRESHOLD)]
    exact_threshold: u64,
    /// Cohen's d standardizer (paired test)
    #[arg(long, value_parser = CohensD::from_str, default_value = "pooled")]
    d_kind: CohensD,
    /// Bonferroni multiplier: number of simultaneous comparisons
    #[arg(long, default_value_t = 1)]
    bonferroni: u64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write the result JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HumanEvalArgs {
    /// Annotation records CSV
    #[arg(long)]
    records: PathBuf,
    /// Compare two models with a paired t-test: MODEL_A,MODEL_B
    #[arg(long, value_delimiter = ',')]
    compare: Option<Vec<String>>,
    /// Dimension for --compare (default: all four)
    #[arg(long, value_parser = Dimension::from_str)]
    dimension: Option<Dimension>,
    #[arg(long, value_parser = Alternative::from_str, default_value = "two-sided")]
    alternative: Alternative,
    /// Bonferroni multiplier applied to every comparison
    #[arg(long, default_value_t = 1)]
    bonferroni: u64,
    /// Also write the summary JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Md,
    Csv,
    Plotdata,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON produced by eval
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: ReportFormat,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Report JSON produced by eval
    #[arg(long)]
    report: PathBuf,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Corpus(CorpusCommand::Import(args)) => commands::corpus::import(args),
        Command::Prefs(PrefsCommand::Build(args)) => commands::prefs::build(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::HumanEval(args) => commands::human_eval::run(args),
        Command::Report(args) => commands::report::run(args),
        Command::Verify(args) => commands::verify::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
