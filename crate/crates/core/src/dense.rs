//! Exact dot-product search over passage-tower encodings.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::Passage;
use crate::encoder::DualEncoder;
use crate::lexical::{top_k, ScoredHit};
use crate::linalg::{dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    vectors: Matrix,
    passage_ids: Vec<String>,
    encoder_fingerprint: u64,
}

impl DenseIndex {
    /// Row `i` is the passage-tower encoding of `passages[i]`.
    pub fn build(encoder: &DualEncoder, passages: &[Passage]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in passages {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        let mut vectors = Matrix::zeros(passages.len(), encoder.config.out_dim);
        for (i, p) in passages.iter().enumerate() {
            vectors.row_mut(i).copy_from_slice(&encoder.encode_passage(&p.text));
        }
        Self::from_parts(vectors, passages.iter().map(|p| p.id.clone()).collect(), encoder.fingerprint())
    }

    pub fn from_parts(vectors: Matrix, passage_ids: Vec<String>, encoder_fingerprint: u64) -> Result<Self> {
        if vectors.rows() != passage_ids.len() {
            return Err(Error::DimensionMismatch { expected: passage_ids.len(), found: vectors.rows() });
        }
        if !vectors.all_finite() {
            return Err(Error::NonFinite("dense index vectors"));
        }
        Ok(DenseIndex { vectors, passage_ids, encoder_fingerprint })
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn encoder_fingerprint(&self) -> u64 {
        self.encoder_fingerprint
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passage_ids.is_empty()
    }

    /// Top `k` rows by dot product with `query`; ties go to the lower row.
    pub fn search_ordinals(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: query.len() });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query vector"));
        }
        let mut scored: Vec<(usize, f64)> = self.vectors.iter_rows().map(|r| dot(r, query)).enumerate().collect();
        top_k(&mut scored, k);
        Ok(scored)
    }

    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredHit>> {
        Ok(self
            .search_ordinals(query, k)?
            .into_iter()
            .map(|(o, score)| ScoredHit { passage_id: self.passage_ids[o].clone(), score })
            .collect())
    }
}
