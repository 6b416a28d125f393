use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use retro_core::corpus::chunk_corpus;
use retro_core::dense::DenseIndex;
use retro_core::encoder::DualEncoder;
use retro_core::experiments::{
    check_sizes, question_token_coverage, run_cell, topk_accuracy, vocab_overlap, MatrixInputs, QueryResult,
    RetrievalRun, System,
};
use retro_core::generator::{generate_for_passage, GeneratorConfig, SamplerConfig, CandidateWeights, SyntheticExample};
use retro_core::lexical::{Bm25Params, InvertedIndex};
use retro_core::stopwords;
use retro_core::toy::ToyWorld;
use retro_core::trainer::{gold_examples, train, Stage, TrainData};

use crate::binary::{fingerprint_warning, load_bm25, load_checkpoint, load_dense, save_bm25, save_checkpoint, save_dense};
use crate::cli::*;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, CoreContext};
use crate::formats::{
    read_documents, read_passages, read_qa, read_queries, read_run, read_synthetic, synthetic_pool, write_passages,
    write_qa, write_report, write_run, write_synthetic, write_train_log, ReportRow,
};
use crate::fsio::write_json;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::IndexBm25(a) => index_bm25(&a),
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train_cmd(&a),
        Command::IndexDense(a) => index_dense(&a),
        Command::Search(a) => search(&a),
        Command::Bm25Search(a) => search(&SearchArgs {
            system: SystemArg::Bm25,
            index: a.index,
            queries: a.queries,
            k: a.k,
            out: a.out,
            ckpt: None,
            label: DenseLabel::Augdpr,
        }),
        Command::Eval(a) => eval(&a),
        Command::Analyze(AnalyzeCommand::Overlap(a)) => overlap(&a),
        Command::Analyze(AnalyzeCommand::Coverage(a)) => coverage(&a),
        Command::Matrix(a) => matrix(&a),
        Command::ToyWorld(a) => toy_world(&a),
        Command::Preset => {
            let text = serde_json::to_string_pretty(&retro_core::presets::FIDELITY).expect("preset serializes");
            println!("{text}");
            Ok(())
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    if a.max_words == 0 {
        return Err(usage("--max-words must be >= 1"));
    }
    let docs = read_documents(&a.input, a.format)?;
    let passages = chunk_corpus(&docs, a.max_words).context(|| a.input.display().to_string())?;
    write_passages(&a.out, &passages)?;
    eprintln!("ingested {} documents into {} passages", docs.len(), passages.len());
    Ok(())
}

pub fn index_bm25(a: &IndexBm25Args) -> CliResult<()> {
    let params = Bm25Params { k1: a.k1, b: a.b };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let store = read_passages(&a.passages)?;
    let index = InvertedIndex::build(store.passages(), params).context(|| a.passages.display().to_string())?;
    save_bm25(&a.out, &index)
}

/// Per-passage generation in parallel; output stays in store order.
pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let config = GeneratorConfig {
        n_questions: a.n,
        sampler: SamplerConfig { top_p: a.top_p, top_k: a.top_k, seed: a.seed },
        weights: CandidateWeights::default(),
        negative_depth: a.negative_depth,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let store = read_passages(&a.passages)?;
    let index = load_bm25(&a.bm25)?;
    let per_passage: Vec<Vec<SyntheticExample>> = store
        .passages()
        .par_iter()
        .map(|p| generate_for_passage(p, &index, &store, &config))
        .collect::<retro_core::Result<_>>()
        .context(|| "generate".to_string())?;
    let examples: Vec<SyntheticExample> = per_passage.into_iter().flatten().collect();
    write_synthetic(&a.out, &examples)?;
    eprintln!("generated {} examples from {} passages", examples.len(), store.len());
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn train_cmd(a: &TrainArgs) -> CliResult<()> {
    let config = RunConfig::load(&a.config)?;
    create_dir(&a.out_dir)?;
    let store = read_passages(&config.paths.passages)?;
    let init = DualEncoder::init(config.encoder_config()).context(|| "encoder".to_string())?;
    let pretrained_path = a.out_dir.join("pretrained.ckpt");

    let pretrained = if matches!(a.stage, StageArg::Pretrain | StageArg::Both) {
        let synth_path = config
            .paths
            .synthetic
            .as_ref()
            .ok_or_else(|| CliError::format(&a.config, None, "paths.synthetic is required for pretraining"))?;
        let pool = synthetic_pool(&read_synthetic(synth_path)?);
        let cfg = config.train_config(Stage::Pretrain);
        let (model, logs) = train(&init, TrainData::Pool(&pool), &store, &cfg).context(|| "pretrain".to_string())?;
        save_checkpoint(&pretrained_path, &model)?;
        write_train_log(&a.out_dir.join("pretrain_log.jsonl"), &logs)?;
        Some(model)
    } else {
        None
    };
    if a.stage == StageArg::Pretrain {
        return Ok(());
    }

    let start = match pretrained {
        Some(m) => m,
        None => load_checkpoint(&pretrained_path)?,
    };
    let index = load_bm25(&config.paths.bm25)?;
    let qa = read_qa(&config.paths.train_qa)?;
    let gold = gold_examples(&qa, &index, &store, config.generator.negative_depth, config.trainer.seed)
        .context(|| config.paths.train_qa.display().to_string())?;
    let cfg = config.train_config(Stage::Finetune);
    let (finetuned, logs) = train(&start, TrainData::Fixed(&gold), &store, &cfg).context(|| "finetune".to_string())?;
    save_checkpoint(&a.out_dir.join("finetuned.ckpt"), &finetuned)?;
    write_train_log(&a.out_dir.join("finetune_log.jsonl"), &logs)?;
    if a.baseline {
        let (baseline, logs) =
            train(&init, TrainData::Fixed(&gold), &store, &cfg).context(|| "finetune baseline".to_string())?;
        save_checkpoint(&a.out_dir.join("finetune_only.ckpt"), &baseline)?;
        write_train_log(&a.out_dir.join("finetune_only_log.jsonl"), &logs)?;
    }
    Ok(())
}

pub fn index_dense(a: &IndexDenseArgs) -> CliResult<()> {
    let model = load_checkpoint(&a.ckpt)?;
    let store = read_passages(&a.passages)?;
    let index = DenseIndex::build(&model, store.passages()).context(|| a.passages.display().to_string())?;
    save_dense(&a.out, &index)
}

pub fn search(a: &SearchArgs) -> CliResult<()> {
    if a.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let queries = read_queries(&a.queries)?;
    let run = match a.system {
        SystemArg::Bm25 => {
            let index = load_bm25(&a.index)?;
            let results = queries
                .iter()
                .enumerate()
                .map(|(qid, q)| QueryResult { qid, question: q.question.clone(), hits: index.search(&q.question, a.k) })
                .collect();
            RetrievalRun { system: System::Bm25, depth: a.k, results }
        }
        SystemArg::Dense => {
            let ckpt = a.ckpt.as_ref().ok_or_else(|| usage("--ckpt is required for dense search"))?;
            let model = load_checkpoint(ckpt)?;
            let index = load_dense(&a.index)?;
            if let Some(w) = fingerprint_warning(&index, &model) {
                eprintln!("warning: {w}");
            }
            let results = queries
                .iter()
                .enumerate()
                .map(|(qid, q)| {
                    let hits = index.search(&model.encode_question(&q.question), a.k)?;
                    Ok(QueryResult { qid, question: q.question.clone(), hits })
                })
                .collect::<retro_core::Result<Vec<_>>>()
                .context(|| a.index.display().to_string())?;
            let system = match a.label {
                DenseLabel::Dpr => System::Dpr,
                DenseLabel::Augdpr => System::Augdpr,
            };
            RetrievalRun { system, depth: a.k, results }
        }
    };
    write_run(&a.out, &run)
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let run = read_run(&a.run)?;
    let qa = read_qa(&a.qa)?;
    let store = read_passages(&a.passages)?;
    let report = topk_accuracy(&run, &qa, &a.ks, &store).context(|| a.run.display().to_string())?;
    let row = ReportRow::new(run.system, run.system.stage_label(), a.size, a.seed, &report);
    write_report(&a.out, &[row], a.csv.as_deref())
}

#[derive(Serialize)]
struct OverlapReport {
    overlap: f64,
    top_n: usize,
    stopwords: &'static str,
}

#[derive(Serialize)]
struct CoverageReport {
    coverage: f64,
    questions: usize,
    stopwords: &'static str,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string(value).expect("report serializes"));
            Ok(())
        }
    }
}

pub fn overlap(a: &OverlapArgs) -> CliResult<()> {
    if a.top_n == 0 {
        return Err(usage("--top-n must be >= 1"));
    }
    let sa = read_passages(&a.a)?;
    let sb = read_passages(&a.b)?;
    let sw = stopwords::english();
    let tokens = retro_core::experiments::corpus_tokens;
    let overlap = vocab_overlap(tokens(&sa), tokens(&sb), a.top_n, &sw).context(|| "overlap".to_string())?;
    emit(&OverlapReport { overlap, top_n: a.top_n, stopwords: stopwords::STOPWORDS_VERSION }, a.out.as_deref())
}

pub fn coverage(a: &CoverageArgs) -> CliResult<()> {
    let qa = read_qa(&a.qa)?;
    let store = read_passages(&a.passages)?;
    let sw = stopwords::english();
    let coverage = question_token_coverage(&qa, &store, &sw).context(|| a.qa.display().to_string())?;
    emit(&CoverageReport { coverage, questions: qa.len(), stopwords: stopwords::STOPWORDS_VERSION }, a.out.as_deref())
}

pub fn matrix(a: &MatrixArgs) -> CliResult<()> {
    if a.jobs == 0 {
        return Err(usage("--jobs must be >= 1"));
    }
    if a.seeds.is_empty() || a.sizes.is_empty() {
        return Err(usage("--sizes and --seeds must be nonempty"));
    }
    check_sizes(&a.sizes).map_err(|e| usage(e.to_string()))?;
    let config = RunConfig::load(&a.config)?;
    let test_path: PathBuf = config
        .paths
        .test_qa
        .clone()
        .ok_or_else(|| CliError::format(&a.config, None, "paths.test_qa is required for the matrix"))?;
    let store = read_passages(&config.paths.passages)?;
    let bm25 = load_bm25(&config.paths.bm25)?;
    let train_qa = read_qa(&config.paths.train_qa)?;
    let test_qa = read_qa(&test_path)?;
    let inputs = MatrixInputs { passages: &store, bm25: &bm25, gold_train: &train_qa, gold_test: &test_qa };
    let settings = config.matrix_settings();
    let cells: Vec<(usize, u64)> = a.sizes.iter().flat_map(|&s| a.seeds.iter().map(move |&seed| (s, seed))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::core("thread pool", retro_core::Error::Invariant(e.to_string())))?;
    let outcomes = pool
        .install(|| cells.par_iter().map(|&(size, seed)| run_cell(inputs, &settings, size, seed)).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for (outcome, (size, seed)) in outcomes.into_iter().zip(&cells) {
        let outcome = outcome.context(|| format!("cell size={size} seed={seed}"))?;
        rows.extend(outcome.rows.iter().map(ReportRow::from));
    }
    write_report(&a.out, &rows, a.csv.as_deref())?;
    print!("{}", crate::formats::render_table(&rows));
    Ok(())
}

pub fn toy_world(a: &ToyWorldArgs) -> CliResult<()> {
    if a.docs == 0 {
        return Err(usage("--docs must be >= 1"));
    }
    create_dir(&a.out_dir)?;
    let world = ToyWorld::generate(a.seed, a.docs, a.train, a.test);
    crate::fsio::write_jsonl(&a.out_dir.join("corpus.jsonl"), &world.documents)?;
    write_qa(&a.out_dir.join("train_qa.jsonl"), &world.train_qa)?;
    write_qa(&a.out_dir.join("test_qa.jsonl"), &world.test_qa)
}
