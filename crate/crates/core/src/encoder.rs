//! Hashed bag-of-words dual encoder.
//!
//! Each tower pools the embeddings of its hashed tokens (mean) and runs a
//! two-layer tanh MLP: `y = W2 · tanh(W1 · x + b1) + b2`. Question and passage
//! towers share a config but not weights; relevance is the raw dot product.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hash::{fnv1a, Fnv1a};
use crate::lexical::tokenize;
use crate::linalg::{axpy, dot, Matrix};
use crate::{Error, Result};

pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default = "defaults::embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "defaults::hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::out_dim")]
    pub out_dim: usize,
    #[serde(default = "defaults::buckets")]
    pub vocab_hash_buckets: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn embed_dim() -> usize {
        64
    }
    pub fn hidden_dim() -> usize {
        128
    }
    pub fn out_dim() -> usize {
        64
    }
    pub fn buckets() -> usize {
        32768
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: defaults::embed_dim(),
            hidden_dim: defaults::hidden_dim(),
            out_dim: defaults::out_dim(),
            vocab_hash_buckets: defaults::buckets(),
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 || self.vocab_hash_buckets == 0 {
            return Err(Error::InvalidArgument("encoder dimensions and buckets must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn bucket_of(token: &str, buckets: usize) -> usize {
    (fnv1a(token.as_bytes()) % buckets as u64) as usize
}

/// Which tower of the dual encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    Question,
    Passage,
}

/// Trainable weights of one tower.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embedding: Matrix,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 5] = ["embedding", "w1", "b1", "w2", "b2"];

impl EncoderParams {
    pub fn zeros(config: &EncoderConfig) -> Self {
        EncoderParams {
            embedding: Matrix::zeros(config.vocab_hash_buckets, config.embed_dim),
            w1: Matrix::zeros(config.hidden_dim, config.embed_dim),
            b1: vec![0.0; config.hidden_dim],
            w2: Matrix::zeros(config.out_dim, config.hidden_dim),
            b2: vec![0.0; config.out_dim],
        }
    }

    /// Uniform(-0.1, 0.1) weights, drawn tensor by tensor in row-major order.
    pub fn random(config: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        p
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [self.embedding.as_slice(), self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [self.embedding.as_mut_slice(), self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn config_shape(&self) -> (usize, usize, usize, usize) {
        (self.embedding.cols(), self.w1.rows(), self.w2.rows(), self.embedding.rows())
    }

    /// Checks tensor shapes against `config` and that all entries are finite.
    pub fn validate(&self, config: &EncoderConfig) -> Result<()> {
        let z = Self::zeros(config);
        for (name, (a, b)) in TENSOR_NAMES.iter().zip(self.tensors().iter().zip(z.tensors())) {
            if a.len() != b.len() {
                return Err(Error::Invariant(alloc::format!("tensor {name} has {} entries, expected {}", a.len(), b.len())));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        if self.config_shape() != z.config_shape() {
            return Err(Error::Invariant("tensor shapes inconsistent with config".into()));
        }
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.b2.len()
    }

    fn buckets_for(&self, text: &str) -> Vec<usize> {
        let n = self.embedding.rows();
        tokenize(text).iter().map(|t| bucket_of(t, n)).collect()
    }

    fn forward(&self, buckets: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut pooled = vec![0.0; self.embedding.cols()];
        for &b in buckets {
            axpy(1.0, self.embedding.row(b), &mut pooled);
        }
        if !buckets.is_empty() {
            let inv = 1.0 / buckets.len() as f64;
            pooled.iter_mut().for_each(|v| *v *= inv);
        }
        let mut hidden = vec![0.0; self.b1.len()];
        self.w1.mul_vec(&pooled, &mut hidden);
        for (h, b) in hidden.iter_mut().zip(&self.b1) {
            *h = libm::tanh(*h + b);
        }
        let mut out = vec![0.0; self.b2.len()];
        self.w2.mul_vec(&hidden, &mut out);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += b;
        }
        (pooled, hidden, out)
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.forward(&self.buckets_for(text)).2
    }

    /// Encodes every text; row `i` equals `encode(texts[i])`.
    pub fn encode_batch<S: AsRef<str>>(&self, texts: &[S]) -> (Matrix, BatchCache) {
        let mut cache = BatchCache::default();
        let mut out = Matrix::zeros(texts.len(), self.out_dim());
        for (i, t) in texts.iter().enumerate() {
            let buckets = self.buckets_for(t.as_ref());
            let (pooled, hidden, y) = self.forward(&buckets);
            out.row_mut(i).copy_from_slice(&y);
            cache.buckets.push(buckets);
            cache.pooled.push(pooled);
            cache.hidden.push(hidden);
        }
        (out, cache)
    }

    /// Exact parameter gradients given `d_out = ∂loss/∂outputs` for a cached batch.
    pub fn backward(&self, cache: &BatchCache, d_out: &Matrix) -> EncoderGrads {
        let mut g = EncoderGrads::zeros_like(self);
        let mut d_hidden = vec![0.0; self.b1.len()];
        let mut d_pooled = vec![0.0; self.embedding.cols()];
        for i in 0..cache.len() {
            let dy = d_out.row(i);
            let h = &cache.hidden[i];
            axpy(1.0, dy, &mut g.b2);
            g.w2.add_outer(dy, h);
            self.w2.mul_vec_transposed(dy, &mut d_hidden);
            for (dh, hv) in d_hidden.iter_mut().zip(h) {
                *dh *= 1.0 - hv * hv;
            }
            axpy(1.0, &d_hidden, &mut g.b1);
            g.w1.add_outer(&d_hidden, &cache.pooled[i]);
            let buckets = &cache.buckets[i];
            if buckets.is_empty() {
                continue;
            }
            self.w1.mul_vec_transposed(&d_hidden, &mut d_pooled);
            let inv = 1.0 / buckets.len() as f64;
            for &b in buckets {
                let row = g.embedding.entry(b).or_insert_with(|| vec![0.0; d_pooled.len()]);
                axpy(inv, &d_pooled, row);
            }
        }
        g
    }
}

/// Forward intermediates kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct BatchCache {
    buckets: Vec<Vec<usize>>,
    pooled: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

impl BatchCache {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// Gradients for one tower. Embedding rows are sparse, keyed by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        EncoderGrads {
            embedding: BTreeMap::new(),
            w1: Matrix::zeros(p.w1.rows(), p.w1.cols()),
            b1: vec![0.0; p.b1.len()],
            w2: Matrix::zeros(p.w2.rows(), p.w2.cols()),
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn accumulate(&mut self, other: &EncoderGrads) {
        for (&b, row) in &other.embedding {
            let dst = self.embedding.entry(b).or_insert_with(|| vec![0.0; row.len()]);
            axpy(1.0, row, dst);
        }
        axpy(1.0, other.w1.as_slice(), self.w1.as_mut_slice());
        axpy(1.0, &other.b1, &mut self.b1);
        axpy(1.0, other.w2.as_slice(), self.w2.as_mut_slice());
        axpy(1.0, &other.b2, &mut self.b2);
    }

    pub fn scale(&mut self, s: f64) {
        for row in self.embedding.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
        for t in [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2] {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Gradient tensors in [`TENSOR_NAMES`] order, embedding densified to `buckets` rows.
    pub fn dense(&self, buckets: usize) -> [Vec<f64>; 5] {
        let dim = self.w1.cols();
        let mut emb = vec![0.0; buckets * dim];
        for (&b, row) in &self.embedding {
            emb[b * dim..(b + 1) * dim].copy_from_slice(row);
        }
        [emb, self.w1.as_slice().to_vec(), self.b1.clone(), self.w2.as_slice().to_vec(), self.b2.clone()]
    }
}

/// Both towers of the retriever.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub config: EncoderConfig,
    pub question: EncoderParams,
    pub passage: EncoderParams,
}

impl DualEncoder {
    /// Question tower seeded with `config.seed`, passage tower with `config.seed + 1`.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(DualEncoder {
            question: EncoderParams::random(&config, config.seed),
            passage: EncoderParams::random(&config, config.seed.wrapping_add(1)),
            config,
        })
    }

    pub fn zeros(config: EncoderConfig) -> Self {
        DualEncoder { question: EncoderParams::zeros(&config), passage: EncoderParams::zeros(&config), config }
    }

    pub fn tower(&self, tower: Tower) -> &EncoderParams {
        match tower {
            Tower::Question => &self.question,
            Tower::Passage => &self.passage,
        }
    }

    pub fn tower_mut(&mut self, tower: Tower) -> &mut EncoderParams {
        match tower {
            Tower::Question => &mut self.question,
            Tower::Passage => &mut self.passage,
        }
    }

    pub fn encode_question(&self, text: &str) -> Vec<f64> {
        self.question.encode(text)
    }

    pub fn encode_passage(&self, text: &str) -> Vec<f64> {
        self.passage.encode(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.question.validate(&self.config)?;
        self.passage.validate(&self.config)
    }

    /// FNV-1a over the config and the bit patterns of every weight.
    pub fn fingerprint(&self) -> u64 {
        let c = &self.config;
        let mut h = Fnv1a::new()
            .update_u64(c.embed_dim as u64)
            .update_u64(c.hidden_dim as u64)
            .update_u64(c.out_dim as u64)
            .update_u64(c.vocab_hash_buckets as u64)
            .update_u64(c.seed);
        for tower in [&self.question, &self.passage] {
            for t in tower.tensors() {
                h = h.update_f64s(t);
            }
        }
        h.finish()
    }
}

pub fn similarity(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: q.len(), found: p.len() });
    }
    Ok(dot(q, p))
}
