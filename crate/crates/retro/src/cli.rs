//! Argument definitions for the `retro` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::error::CliError;
use crate::formats::CorpusFormat;

#[derive(Debug, Parser)]
#[command(
    name = "retro",
    version,
    about = "Lexical and dense passage retrieval with synthetic question pretraining",
    long_about = "Lexical and dense passage retrieval with synthetic question pretraining.\n\n\
        Each subcommand reads the artifacts of earlier stages from disk and writes its own, \
        so any stage can be rerun in isolation. Stochastic stages take explicit seeds and \
        produce byte-identical output for identical inputs."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a raw corpus into sentence-aligned passages of at most --max-words words.
    Ingest(IngestArgs),
    /// Build a BM25 inverted index over passage text.
    #[command(name = "index-bm25")]
    IndexBm25(IndexBm25Args),
    /// Generate synthetic questions per passage and mine BM25 hard negatives.
    Generate(GenerateArgs),
    /// Train the dual encoder: synthetic pretraining, gold finetuning, or both.
    #[command(long_about = "Train the dual encoder.\n\n\
        Stages read their settings from the run config. Unless overridden there, \
        pretraining runs 6 epochs and finetuning 20 epochs (batch size 32, \
        learning rate 0.01, no gradient accumulation).\n\n\
        pretrain: synthetic pool -> pretrained.ckpt\n\
        finetune: pretrained.ckpt + gold pairs -> finetuned.ckpt\n\
        both:     pretrain followed by finetune\n\
        --baseline additionally finetunes from the random init -> finetune_only.ckpt")]
    Train(TrainArgs),
    /// Encode every passage with a checkpoint's passage tower.
    #[command(name = "index-dense")]
    IndexDense(IndexDenseArgs),
    /// Retrieve the top --k passages for each query.
    Search(SearchArgs),
    /// Shorthand for `search --system bm25`.
    #[command(name = "bm25-search")]
    Bm25Search(Bm25SearchArgs),
    /// Top-k retrieval accuracy of a run against gold answers.
    Eval(EvalArgs),
    /// Corpus and question diagnostics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Ablation over synthetic pool sizes and seeds.
    Matrix(MatrixArgs),
    /// Write a generated toy corpus with gold train/test questions.
    #[command(name = "toy-world")]
    ToyWorld(ToyWorldArgs),
    /// Print the reference hyperparameters of the large-scale setup as JSON.
    Preset,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: CorpusFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum words per passage.
    #[arg(long, default_value_t = retro_core::corpus::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
}

#[derive(Debug, Args)]
pub struct IndexBm25Args {
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Term-frequency saturation.
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    /// Length normalisation.
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub bm25: PathBuf,
    /// Questions drawn per passage (duplicates are dropped).
    #[arg(long, default_value_t = retro_core::generator::DEFAULT_QUESTIONS_PER_PASSAGE)]
    pub n: usize,
    /// Nucleus mass kept after top-k truncation.
    #[arg(long, default_value_t = retro_core::generator::DEFAULT_TOP_P)]
    pub top_p: f64,
    /// Most probable answer candidates kept before nucleus truncation.
    #[arg(long, default_value_t = retro_core::generator::DEFAULT_TOP_K)]
    pub top_k: usize,
    /// BM25 hits considered when mining a hard negative.
    #[arg(long, default_value_t = retro_core::generator::DEFAULT_NEGATIVE_DEPTH)]
    pub negative_depth: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Pretrain,
    Finetune,
    Both,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::Both)]
    pub stage: StageArg,
    /// Also train the finetune-only baseline from the random init.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexDenseArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Bm25,
    Dense,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum)]
    pub system: SystemArg,
    /// BM25 snapshot or dense index, matching --system.
    #[arg(long)]
    pub index: PathBuf,
    /// JSONL with a "question" key per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint whose question tower encodes the queries (dense only).
    #[arg(long, required_if_eq("system", "dense"))]
    pub ckpt: Option<PathBuf>,
    /// Label for dense runs.
    #[arg(long, value_enum, default_value_t = DenseLabel::Augdpr)]
    pub label: DenseLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenseLabel {
    Dpr,
    Augdpr,
}

#[derive(Debug, Args)]
pub struct Bm25SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    /// Passage store used to check answer containment.
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20,100")]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Synthetic pool size recorded in the report.
    #[arg(long)]
    pub size: Option<usize>,
    /// Seed recorded in the report.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Share of the top-N non-stopword vocabulary two passage stores have in common.
    Overlap(OverlapArgs),
    /// Mean share of each question's non-stopword tokens present in its gold passage.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub top_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Synthetic pool sizes in passages, ascending; 0 means no pretraining.
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Cells trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyWorldArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub train: usize,
    #[arg(long, default_value_t = 50)]
    pub test: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return report(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.one_line());
    e.exit_code()
}
