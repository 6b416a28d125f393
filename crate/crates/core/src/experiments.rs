//! Top-k accuracy, vocabulary diagnostics and the experiment matrix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{contains_answer, PassageStore, QAPair};
use crate::dense::DenseIndex;
use crate::encoder::{DualEncoder, EncoderConfig};
use crate::generator::{generate_for_passage, GeneratorConfig, SyntheticExample};
use crate::hash::substream;
use crate::lexical::{tokenize, InvertedIndex, ScoredHit};
use crate::trainer::{gold_examples, train, EpochLog, Stage, SyntheticPool, TrainConfig, TrainData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Bm25,
    Dpr,
    Augdpr,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::Bm25 => "bm25",
            System::Dpr => "dpr",
            System::Augdpr => "augdpr",
        }
    }

    /// Training schedule label used in reports.
    pub fn stage_label(self) -> &'static str {
        match self {
            System::Bm25 => "none",
            System::Dpr => "finetune",
            System::Augdpr => "pretrain+finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub qid: usize,
    pub question: String,
    pub hits: Vec<ScoredHit>,
}

/// Ranked hits per question; `depth` is the requested cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub system: System,
    pub depth: usize,
    pub results: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: BTreeMap<usize, f64>,
    pub questions: usize,
}

pub fn bm25_run(index: &InvertedIndex, qa: &[QAPair], depth: usize) -> RetrievalRun {
    RetrievalRun {
        system: System::Bm25,
        depth,
        results: qa
            .iter()
            .enumerate()
            .map(|(qid, q)| QueryResult { qid, question: q.question.clone(), hits: index.search(&q.question, depth) })
            .collect(),
    }
}

pub fn dense_run(
    system: System,
    encoder: &DualEncoder,
    index: &DenseIndex,
    qa: &[QAPair],
    depth: usize,
) -> Result<RetrievalRun> {
    let results = qa
        .iter()
        .enumerate()
        .map(|(qid, q)| {
            let hits = index.search(&encoder.encode_question(&q.question), depth)?;
            Ok(QueryResult { qid, question: q.question.clone(), hits })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalRun { system, depth, results })
}

/// Fraction of questions with an answer-bearing passage in the top `k`, for each `k`.
pub fn topk_accuracy(run: &RetrievalRun, qa: &[QAPair], ks: &[usize], passages: &PassageStore) -> Result<AccuracyReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("ks must be nonempty and >= 1".into()));
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if max_k > run.depth {
        return Err(Error::InvalidArgument(format!("k = {max_k} exceeds run depth {}", run.depth)));
    }
    let by_qid: BTreeMap<usize, &QueryResult> = run.results.iter().map(|r| (r.qid, r)).collect();
    // rank of the first answer-bearing hit, per question
    let mut first_hit: Vec<Option<usize>> = Vec::with_capacity(qa.len());
    for (qid, pair) in qa.iter().enumerate() {
        let result = by_qid.get(&qid).ok_or(Error::MissingQuestion(qid))?;
        let mut rank = None;
        for (r, hit) in result.hits.iter().take(max_k).enumerate() {
            if contains_answer(passages.require(&hit.passage_id)?, &pair.answers) {
                rank = Some(r + 1);
                break;
            }
        }
        first_hit.push(rank);
    }
    let n = qa.len();
    let accuracy = ks
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    Ok(AccuracyReport { accuracy, questions: n })
}

/// The `top_n` most frequent non-stopword tokens; ties go to the lexicographically smaller token.
pub fn top_tokens<I, S>(tokens: I, top_n: usize, stopwords: &BTreeSet<&str>) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in tokens {
        let t = t.as_ref();
        if !stopwords.contains(t) {
            *counts.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(top_n).map(|e| e.0).collect()
}

/// `|V_a ∩ V_b| / min(|V_a|, |V_b|)` over each corpus's top-`top_n` vocabulary.
pub fn vocab_overlap<I, J, S, T>(corpus_a: I, corpus_b: J, top_n: usize, stopwords: &BTreeSet<&str>) -> Result<f64>
where
    I: IntoIterator<Item = S>,
    J: IntoIterator<Item = T>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    let a = top_tokens(corpus_a, top_n, stopwords);
    let b = top_tokens(corpus_b, top_n, stopwords);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("corpus after stop-word removal"));
    }
    let shared = a.intersection(&b).count();
    Ok(shared as f64 / a.len().min(b.len()) as f64)
}

/// Tokens of every passage text, concatenated in store order.
pub fn corpus_tokens(passages: &PassageStore) -> Vec<String> {
    passages.passages().iter().flat_map(|p| tokenize(&p.text)).collect()
}

/// Mean over questions of the share of their distinct non-stopword tokens
/// found in the gold passage. Questions with no such tokens are skipped.
pub fn question_token_coverage(qa: &[QAPair], passages: &PassageStore, stopwords: &BTreeSet<&str>) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for pair in qa {
        let gold = pair
            .gold_passage_id
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("question {:?} has no gold passage", pair.question)))?;
        let passage_tokens: BTreeSet<String> = tokenize(&passages.require(gold)?.text).into_iter().collect();
        let q_tokens: BTreeSet<String> =
            tokenize(&pair.question).into_iter().filter(|t| !stopwords.contains(t.as_str())).collect();
        if q_tokens.is_empty() {
            continue;
        }
        let covered = q_tokens.iter().filter(|t| passage_tokens.contains(*t)).count();
        total += covered as f64 / q_tokens.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyInput("questions with non-stopword tokens"));
    }
    Ok(total / counted as f64)
}

/// Synthetic examples for `size` passages taken in a seed-shuffled order.
///
/// The size counts passages, which is also the number of synthetic training
/// examples per epoch after resampling. Passages without candidates are
/// skipped; fewer than `size` passages are used only if the corpus runs out.
pub fn build_pool(
    passages: &PassageStore,
    index: &InvertedIndex,
    generator: &GeneratorConfig,
    size: usize,
    seed: u64,
) -> Result<Vec<SyntheticExample>> {
    generator.validate()?;
    let mut order: Vec<&crate::corpus::Passage> = passages.passages().iter().collect();
    order.shuffle(&mut substream(seed, "pool-order", 0));
    let mut out = Vec::new();
    let mut used = 0usize;
    for p in order {
        if used >= size {
            break;
        }
        let examples = generate_for_passage(p, index, passages, generator)?;
        if !examples.is_empty() {
            used += 1;
            out.extend(examples);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSettings {
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub ks: Vec<usize>,
}

impl Default for MatrixSettings {
    fn default() -> Self {
        MatrixSettings {
            encoder: EncoderConfig::default(),
            generator: GeneratorConfig::default(),
            pretrain: TrainConfig::new(Stage::Pretrain, 0),
            finetune: TrainConfig::new(Stage::Finetune, 0),
            ks: alloc::vec![1, 5, 20, 100],
        }
    }
}

impl MatrixSettings {
    /// Same settings with every stochastic component seeded by `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.encoder.seed = seed;
        s.generator.sampler.seed = seed;
        s.pretrain.seed = seed;
        s.finetune.seed = seed;
        s
    }

    pub fn depth(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(1)
    }
}

/// Shared inputs of every matrix cell.
#[derive(Debug, Clone, Copy)]
pub struct MatrixInputs<'a> {
    pub passages: &'a PassageStore,
    pub bm25: &'a InvertedIndex,
    pub gold_train: &'a [QAPair],
    pub gold_test: &'a [QAPair],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub system: System,
    pub stage: String,
    pub size: usize,
    pub seed: u64,
    pub report: AccuracyReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub rows: Vec<MatrixRow>,
    pub logs: Vec<EpochLog>,
}

/// Trained models of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModels {
    pub init: DualEncoder,
    pub pretrained: Option<DualEncoder>,
    pub augdpr: DualEncoder,
    pub dpr: DualEncoder,
    pub logs: Vec<EpochLog>,
}

/// Finetune-only and pretrain-then-finetune models for one (size, seed).
pub fn train_cell(inputs: MatrixInputs<'_>, settings: &MatrixSettings, size: usize, seed: u64) -> Result<CellModels> {
    let s = settings.reseeded(seed);
    let init = DualEncoder::init(s.encoder)?;
    let gold = gold_examples(inputs.gold_train, inputs.bm25, inputs.passages, s.generator.negative_depth, seed)?;
    let (dpr, mut logs) = train(&init, TrainData::Fixed(&gold), inputs.passages, &s.finetune)?;
    let (pretrained, augdpr) = if size == 0 {
        (None, dpr.clone())
    } else {
        let pool = SyntheticPool::from_examples(&build_pool(inputs.passages, inputs.bm25, &s.generator, size, seed)?);
        let (pre, pre_logs) = train(&init, TrainData::Pool(&pool), inputs.passages, &s.pretrain)?;
        let (aug, aug_logs) = train(&pre, TrainData::Fixed(&gold), inputs.passages, &s.finetune)?;
        logs.extend(pre_logs);
        logs.extend(aug_logs);
        (Some(pre), aug)
    };
    Ok(CellModels { init, pretrained, augdpr, dpr, logs })
}

/// Accuracy of a trained dense model on `qa`.
pub fn evaluate_dense(
    system: System,
    encoder: &DualEncoder,
    passages: &PassageStore,
    qa: &[QAPair],
    ks: &[usize],
) -> Result<AccuracyReport> {
    let index = DenseIndex::build(encoder, passages.passages())?;
    let depth = ks.iter().copied().max().unwrap_or(1);
    topk_accuracy(&dense_run(system, encoder, &index, qa, depth)?, qa, ks, passages)
}

/// One matrix cell: BM25, finetune-only and pretrain+finetune on the test questions.
pub fn run_cell(inputs: MatrixInputs<'_>, settings: &MatrixSettings, size: usize, seed: u64) -> Result<CellOutcome> {
    let models = train_cell(inputs, settings, size, seed)?;
    let ks = &settings.ks;
    let bm25 = topk_accuracy(&bm25_run(inputs.bm25, inputs.gold_test, settings.depth()), inputs.gold_test, ks, inputs.passages)?;
    let dpr = evaluate_dense(System::Dpr, &models.dpr, inputs.passages, inputs.gold_test, ks)?;
    let aug = evaluate_dense(System::Augdpr, &models.augdpr, inputs.passages, inputs.gold_test, ks)?;
    let row = |system: System, report| MatrixRow { system, stage: system.stage_label().into(), size, seed, report };
    Ok(CellOutcome { rows: alloc::vec![row(System::Bm25, bm25), row(System::Dpr, dpr), row(System::Augdpr, aug)], logs: models.logs })
}

pub fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("sizes must be ascending".into()));
    }
    Ok(())
}

/// Every (size, seed) cell in order, three reports per cell.
pub fn run_matrix(inputs: MatrixInputs<'_>, settings: &MatrixSettings, sizes: &[usize], seeds: &[u64]) -> Result<Vec<MatrixRow>> {
    check_sizes(sizes)?;
    let mut rows = Vec::new();
    for &size in sizes {
        for &seed in seeds {
            rows.extend(run_cell(inputs, settings, size, seed)?.rows);
        }
    }
    Ok(rows)
}
