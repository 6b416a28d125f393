//! Contrastive training of the dual encoder with in-batch negatives.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{text_contains_answer, PassageStore, QAPair};
use crate::encoder::{DualEncoder, EncoderGrads, EncoderParams, Tower, TENSOR_NAMES};
use crate::generator::SyntheticExample;
use crate::hash::substream;
use crate::lexical::InvertedIndex;
use crate::linalg::{axpy, dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrainExample {
    pub question: String,
    pub positive_passage_id: String,
    #[serde(default)]
    pub hard_negative_passage_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            Stage::Pretrain => 6,
            Stage::Finetune => 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_accum")]
    pub grad_accum_steps: usize,
}

fn default_batch() -> usize {
    32
}

fn default_lr() -> f64 {
    1e-2
}

fn default_accum() -> usize {
    1
}

impl TrainConfig {
    pub fn new(stage: Stage, seed: u64) -> Self {
        TrainConfig {
            stage,
            batch_size: default_batch(),
            epochs: stage.default_epochs(),
            learning_rate: default_lr(),
            seed,
            grad_accum_steps: default_accum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum_steps == 0 {
            return Err(Error::InvalidArgument("batch_size and grad_accum_steps must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Synthetic training candidates grouped by source passage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticPool {
    by_passage: BTreeMap<String, Vec<TrainExample>>,
}

impl SyntheticPool {
    pub fn from_examples(examples: &[SyntheticExample]) -> Self {
        let mut by_passage: BTreeMap<String, Vec<TrainExample>> = BTreeMap::new();
        for ex in examples {
            by_passage.entry(ex.passage_id.clone()).or_default().push(TrainExample {
                question: ex.question.clone(),
                positive_passage_id: ex.passage_id.clone(),
                hard_negative_passage_id: ex.negative_passage_id.clone(),
            });
        }
        SyntheticPool { by_passage }
    }

    pub fn insert(&mut self, example: TrainExample) {
        self.by_passage.entry(example.positive_passage_id.clone()).or_default().push(example);
    }

    pub fn passages(&self) -> impl Iterator<Item = (&String, &Vec<TrainExample>)> {
        self.by_passage.iter()
    }

    pub fn passage_count(&self) -> usize {
        self.by_passage.len()
    }

    pub fn example_count(&self) -> usize {
        self.by_passage.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_passage.is_empty()
    }

    fn examples(&self) -> impl Iterator<Item = &TrainExample> {
        self.by_passage.values().flatten()
    }
}

/// One question per passage for this epoch, in shuffled order.
pub fn resample_epoch(pool: &SyntheticPool, epoch: usize, seed: u64) -> Result<Vec<TrainExample>> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("synthetic pool"));
    }
    let mut rng = substream(seed, "resample", epoch as u64);
    let mut picked: Vec<TrainExample> =
        pool.by_passage.values().map(|list| list[rng.gen_range(0..list.len())].clone()).collect();
    picked.shuffle(&mut rng);
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub d_questions: Matrix,
    pub d_positives: Matrix,
    pub d_negatives: Matrix,
}

/// Softmax cross-entropy of each question against every positive and every
/// hard negative in the batch, averaged over questions.
///
/// `neg_owner[j]` is the question that contributed negative `j`; the pool is
/// shared, so ownership does not change the loss.
pub fn in_batch_loss(questions: &Matrix, positives: &Matrix, negatives: &Matrix, neg_owner: &[usize]) -> Result<LossOutput> {
    let b = questions.rows();
    let d = questions.cols();
    if b == 0 {
        return Err(Error::EmptyInput("batch"));
    }
    if positives.rows() != b {
        return Err(Error::DimensionMismatch { expected: b, found: positives.rows() });
    }
    for m in [positives, negatives] {
        if m.cols() != d && m.rows() > 0 {
            return Err(Error::DimensionMismatch { expected: d, found: m.cols() });
        }
    }
    if neg_owner.len() != negatives.rows() || neg_owner.iter().any(|&o| o >= b) {
        return Err(Error::InvalidArgument("neg_owner must name a question for every negative".into()));
    }
    if !questions.all_finite() || !positives.all_finite() || !negatives.all_finite() {
        return Err(Error::NonFinite("loss inputs"));
    }

    let candidates: Vec<&[f64]> = positives.iter_rows().chain(negatives.iter_rows()).collect();
    let m = candidates.len();
    let mut d_questions = Matrix::zeros(b, d);
    let mut d_cand = Matrix::zeros(m, d);
    let mut total = 0.0;
    let mut scores = alloc::vec![0.0; m];
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let q = questions.row(i);
        for (s, c) in scores.iter_mut().zip(&candidates) {
            *s = dot(q, c);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = scores.iter().map(|s| libm::exp(s - max)).sum();
        let lse = max + libm::log(sum);
        total += lse - scores[i];
        for (c, &s) in scores.iter().enumerate() {
            let mut g = libm::exp(s - lse);
            if c == i {
                g -= 1.0;
            }
            g *= inv_b;
            axpy(g, candidates[c], d_questions.row_mut(i));
            axpy(g, q, d_cand.row_mut(c));
        }
    }
    let (pos, neg) = d_cand.as_slice().split_at(b * d);
    Ok(LossOutput {
        loss: total * inv_b,
        d_questions,
        d_positives: Matrix::from_vec(b, d, pos.to_vec())?,
        d_negatives: Matrix::from_vec(m - b, d, neg.to_vec())?,
    })
}

/// Texts of one training batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBatch {
    pub questions: Vec<String>,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    pub neg_owner: Vec<usize>,
}

impl LossBatch {
    pub fn from_examples(examples: &[TrainExample], passages: &PassageStore) -> Result<Self> {
        let mut batch = LossBatch::default();
        for (i, ex) in examples.iter().enumerate() {
            batch.questions.push(ex.question.clone());
            batch.positives.push(passages.require(&ex.positive_passage_id)?.text.clone());
            if let Some(neg) = &ex.hard_negative_passage_id {
                batch.negatives.push(passages.require(neg)?.text.clone());
                batch.neg_owner.push(i);
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

fn candidate_texts(batch: &LossBatch) -> Vec<&str> {
    batch.positives.iter().chain(&batch.negatives).map(String::as_str).collect()
}

fn split_outputs(c: &Matrix, b: usize) -> Result<(Matrix, Matrix)> {
    let d = c.cols();
    let (pos, neg) = c.as_slice().split_at(b * d);
    Ok((Matrix::from_vec(b, d, pos.to_vec())?, Matrix::from_vec(c.rows() - b, d, neg.to_vec())?))
}

/// Loss of `model` on `batch` without gradients.
pub fn batch_loss(model: &DualEncoder, batch: &LossBatch) -> Result<f64> {
    let (q, _) = model.question.encode_batch(&batch.questions);
    let (c, _) = model.passage.encode_batch(&candidate_texts(batch));
    let (pos, neg) = split_outputs(&c, batch.len())?;
    Ok(in_batch_loss(&q, &pos, &neg, &batch.neg_owner)?.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualGrads {
    pub question: EncoderGrads,
    pub passage: EncoderGrads,
}

impl DualGrads {
    fn accumulate(&mut self, other: &DualGrads) {
        self.question.accumulate(&other.question);
        self.passage.accumulate(&other.passage);
    }

    fn scale(&mut self, s: f64) {
        self.question.scale(s);
        self.passage.scale(s);
    }

    pub fn tower(&self, tower: Tower) -> &EncoderGrads {
        match tower {
            Tower::Question => &self.question,
            Tower::Passage => &self.passage,
        }
    }
}

/// Loss and exact gradients for both towers.
pub fn loss_and_grads(model: &DualEncoder, batch: &LossBatch) -> Result<(f64, DualGrads)> {
    let (q, q_cache) = model.question.encode_batch(&batch.questions);
    let (c, c_cache) = model.passage.encode_batch(&candidate_texts(batch));
    let (pos, neg) = split_outputs(&c, batch.len())?;
    let out = in_batch_loss(&q, &pos, &neg, &batch.neg_owner)?;
    let mut d_c = out.d_positives.into_vec();
    d_c.extend_from_slice(out.d_negatives.as_slice());
    let d_c = Matrix::from_vec(c.rows(), c.cols(), d_c)?;
    Ok((
        out.loss,
        DualGrads {
            question: model.question.backward(&q_cache, &out.d_questions),
            passage: model.passage.backward(&c_cache, &d_c),
        },
    ))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct TowerMoments {
    m: [Vec<f64>; 5],
    v: [Vec<f64>; 5],
    // embedding rows that ever received a gradient; the rest have zero moments
    touched: Vec<bool>,
    touched_rows: Vec<usize>,
}

impl TowerMoments {
    fn new(p: &EncoderParams) -> Self {
        let zeros = |t: &[f64]| alloc::vec![0.0; t.len()];
        let ts = p.tensors();
        TowerMoments {
            m: ts.map(zeros),
            v: ts.map(zeros),
            touched: alloc::vec![false; p.embedding.rows()],
            touched_rows: Vec::new(),
        }
    }
}

/// Adam with bias correction. Embedding rows that have never had a gradient
/// are skipped; their update would be exactly zero.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    step: u64,
    question: TowerMoments,
    passage: TowerMoments,
}

fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
}

impl Adam {
    pub fn new(model: &DualEncoder, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            step: 0,
            question: TowerMoments::new(&model.question),
            passage: TowerMoments::new(&model.passage),
        }
    }

    pub fn step(&mut self, model: &mut DualEncoder, grads: &DualGrads) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.step as f64);
        let lr = self.learning_rate;
        for (params, moments, g) in [
            (&mut model.question, &mut self.question, &grads.question),
            (&mut model.passage, &mut self.passage, &grads.passage),
        ] {
            let dim = params.embedding.cols();
            for &row in g.embedding.keys() {
                if !moments.touched[row] {
                    moments.touched[row] = true;
                    moments.touched_rows.push(row);
                }
            }
            moments.touched_rows.sort_unstable();
            let emb = params.embedding.as_mut_slice();
            for &row in &moments.touched_rows {
                let grow = g.embedding.get(&row);
                for c in 0..dim {
                    let k = row * dim + c;
                    let gv = grow.map_or(0.0, |r| r[c]);
                    adam_update(&mut emb[k], gv, &mut moments.m[0][k], &mut moments.v[0][k], lr, c1, c2);
                }
            }
            let dense = [g.w1.as_slice(), &g.b1, g.w2.as_slice(), &g.b2];
            let [_, w1, b1, w2, b2] = params.tensors_mut();
            for (t, (ps, gs)) in [w1, b1, w2, b2].into_iter().zip(dense).enumerate() {
                let (m, v) = (&mut moments.m[t + 1], &mut moments.v[t + 1]);
                for k in 0..ps.len() {
                    adam_update(&mut ps[k], gs[k], &mut m[k], &mut v[k], lr, c1, c2);
                }
            }
        }
    }
}

/// Training data for one stage.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// Synthetic pretraining: one resampled question per passage per epoch.
    Pool(&'a SyntheticPool),
    /// Fixed examples, reshuffled each epoch.
    Fixed(&'a [TrainExample]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    pub mean_loss: f64,
    pub examples: usize,
}

fn check_examples<'a>(
    examples: impl Iterator<Item = &'a TrainExample>,
    passages: &PassageStore,
    config: &TrainConfig,
) -> Result<()> {
    for ex in examples {
        passages.require(&ex.positive_passage_id)?;
        match &ex.hard_negative_passage_id {
            Some(neg) if *neg == ex.positive_passage_id => {
                return Err(Error::InvalidArgument(format!("hard negative equals positive {neg:?}")));
            }
            Some(neg) => {
                passages.require(neg)?;
            }
            None if config.batch_size < 2 => {
                return Err(Error::InvalidArgument(
                    "batch_size 1 needs a hard negative for every example".into(),
                ));
            }
            None => {}
        }
    }
    Ok(())
}

/// Runs one training stage, returning the updated model and per-epoch losses.
pub fn train(
    model: &DualEncoder,
    data: TrainData<'_>,
    passages: &PassageStore,
    config: &TrainConfig,
) -> Result<(DualEncoder, Vec<EpochLog>)> {
    config.validate()?;
    match data {
        TrainData::Pool(pool) => {
            if pool.is_empty() && config.epochs > 0 {
                return Err(Error::EmptyInput("synthetic pool"));
            }
            check_examples(pool.examples(), passages, config)?;
        }
        TrainData::Fixed(list) => check_examples(list.iter(), passages, config)?,
    }

    let mut model = model.clone();
    let mut adam = Adam::new(&model, config.learning_rate);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let examples = match data {
            TrainData::Pool(pool) => resample_epoch(pool, epoch, config.seed)?,
            TrainData::Fixed(list) => {
                let mut v = list.to_vec();
                v.shuffle(&mut substream(config.seed, "shuffle", epoch as u64));
                v
            }
        };
        let mut loss_sum = 0.0;
        let mut pending: Option<DualGrads> = None;
        let mut pending_count = 0usize;
        let n_batches = examples.len().div_ceil(config.batch_size);
        for (bi, chunk) in examples.chunks(config.batch_size).enumerate() {
            let batch = LossBatch::from_examples(chunk, passages)?;
            let (loss, grads) = loss_and_grads(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            loss_sum += loss * chunk.len() as f64;
            match &mut pending {
                Some(acc) => acc.accumulate(&grads),
                None => pending = Some(grads),
            }
            pending_count += 1;
            if pending_count == config.grad_accum_steps || bi + 1 == n_batches {
                if let Some(mut g) = pending.take() {
                    if pending_count > 1 {
                        g.scale(1.0 / pending_count as f64);
                    }
                    adam.step(&mut model, &g);
                }
                pending_count = 0;
            }
        }
        let mean_loss = if examples.is_empty() { 0.0 } else { loss_sum / examples.len() as f64 };
        logs.push(EpochLog { stage: config.stage, epoch, mean_loss, examples: examples.len() });
    }
    Ok((model, logs))
}

/// Gold QA pairs as training examples, each with a BM25 negative when one
/// exists that lacks every answer.
pub fn gold_examples(
    qa: &[QAPair],
    index: &InvertedIndex,
    passages: &PassageStore,
    depth: usize,
    seed: u64,
) -> Result<Vec<TrainExample>> {
    qa.iter()
        .enumerate()
        .map(|(i, pair)| {
            let gold = pair
                .gold_passage_id
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("question {:?} has no gold passage", pair.question)))?;
            passages.require(gold)?;
            let pool: Vec<String> = index
                .search(&pair.question, depth)
                .into_iter()
                .filter(|h| h.passage_id != *gold)
                .filter(|h| passages.get(&h.passage_id).is_some_and(|p| !text_contains_answer(&p.text, &pair.answers)))
                .map(|h| h.passage_id)
                .collect();
            let mut rng = substream(seed, "gold-negative", i as u64);
            let negative = if pool.is_empty() { None } else { Some(pool[rng.gen_range(0..pool.len())].clone()) };
            Ok(TrainExample { question: pair.question.clone(), positive_passage_id: gold.clone(), hard_negative_passage_id: negative })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tower: Tower,
    pub tensor: &'static str,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_tensor: Vec<GradCheckEntry>,
}

/// Symmetric relative error with a floor on the denominator.
///
/// Central differences at h = 1e-5 carry roughly 1e-11 of rounding noise, so
/// gradients that are structurally zero (a bias shifting every candidate
/// equally) would otherwise show relative errors near 1. The 1e-6 floor keeps
/// such entries well below any sensible tolerance.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(REL_ERROR_FLOOR, analytic.abs() + numeric.abs())
}

/// Compares analytic gradients against central finite differences for every
/// parameter of both towers.
pub fn grad_check(model: &DualEncoder, batch: &LossBatch, h: f64) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let (_, grads) = loss_and_grads(model, batch)?;
    let mut probe = model.clone();
    let mut per_tensor = Vec::new();
    let mut max_rel_error = 0.0f64;
    for tower in [Tower::Question, Tower::Passage] {
        let analytic = grads.tower(tower).dense(model.config.vocab_hash_buckets);
        for (t, name) in TENSOR_NAMES.iter().enumerate() {
            let mut worst = 0.0f64;
            for (k, &grad) in analytic[t].iter().enumerate() {
                let orig = probe.tower(tower).tensors()[t][k];
                probe.tower_mut(tower).tensors_mut()[t][k] = orig + h;
                let plus = batch_loss(&probe, batch)?;
                probe.tower_mut(tower).tensors_mut()[t][k] = orig - h;
                let minus = batch_loss(&probe, batch)?;
                probe.tower_mut(tower).tensors_mut()[t][k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                worst = worst.max(relative_error(grad, numeric));
            }
            max_rel_error = max_rel_error.max(worst);
            per_tensor.push(GradCheckEntry { tower, tensor: name, max_rel_error: worst });
        }
    }
    Ok(GradCheckReport { max_rel_error, per_tensor })
}
