//! Okapi BM25 over an in-memory inverted index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::{Error, Result};

/// Lowercase, then split on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Unique tokens in order of first occurrence.
pub fn unique_in_order<S: AsRef<str>>(tokens: &[S]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    tokens.iter().map(AsRef::as_ref).filter(|t| seen.insert(*t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(alloc::format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Nonnegative BM25 idf, `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

/// Saturated, length-normalized term frequency.
pub fn tf_weight(tf: u32, doc_len: u32, avg_doc_len: f64, params: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = if avg_doc_len > 0.0 { f64::from(doc_len) / avg_doc_len } else { 0.0 };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub passage_id: String,
    pub score: f64,
}

/// Descending score, then ascending ordinal.
pub fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Inverted index with BM25 statistics.
///
/// Ordinals are assigned by ascending passage id, so the index (and every
/// tie-break) does not depend on the order passages were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    passage_ids: Vec<String>,
    params: Bm25Params,
}

fn mean_length(lengths: &[u32]) -> f64 {
    if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / lengths.len() as f64
    }
}

impl InvertedIndex {
    pub fn build(passages: &[Passage], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        let mut order: Vec<&Passage> = passages.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = order.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(order.len());
        for (ordinal, p) in order.iter().enumerate() {
            let tokens = tokenize(&p.text);
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (t, tf) in counts {
                postings.entry(t).or_default().push(Posting { ordinal: ordinal as u32, tf });
            }
        }
        let avg_doc_length = mean_length(&doc_lengths);
        Ok(InvertedIndex {
            postings,
            doc_lengths,
            avg_doc_length,
            passage_ids: order.into_iter().map(|p| p.id.clone()).collect(),
            params,
        })
    }

    /// Reassembles an index from persisted parts, checking every invariant.
    pub fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        passage_ids: Vec<String>,
        params: Bm25Params,
    ) -> Result<Self> {
        params.validate()?;
        if doc_lengths.len() != passage_ids.len() {
            return Err(Error::DimensionMismatch { expected: passage_ids.len(), found: doc_lengths.len() });
        }
        if passage_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("passage ids must be strictly ascending".into()));
        }
        let n = passage_ids.len() as u32;
        for (token, list) in &postings {
            let sorted = list.windows(2).all(|w| w[0].ordinal < w[1].ordinal);
            let valid = list.iter().all(|p| p.ordinal < n && p.tf >= 1);
            if list.is_empty() || !sorted || !valid {
                return Err(Error::Invariant(alloc::format!("bad posting list for {token:?}")));
            }
        }
        Ok(InvertedIndex { avg_doc_length: mean_length(&doc_lengths), postings, doc_lengths, passage_ids, params })
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn posting_list(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passage_ids.is_empty()
    }

    pub fn ordinal_of(&self, passage_id: &str) -> Option<usize> {
        self.passage_ids.binary_search_by(|p| p.as_str().cmp(passage_id)).ok()
    }

    fn term_score(&self, df: usize, tf: u32, ordinal: usize) -> f64 {
        idf(self.len(), df) * tf_weight(tf, self.doc_lengths[ordinal], self.avg_doc_length, self.params)
    }

    /// BM25 score of one passage; repeated query tokens count once.
    pub fn score<S: AsRef<str>>(&self, query_tokens: &[S], ordinal: usize) -> Result<f64> {
        if ordinal >= self.len() {
            return Err(Error::InvalidArgument(alloc::format!("ordinal {ordinal} out of range")));
        }
        let mut score = 0.0;
        for t in unique_in_order(query_tokens) {
            let list = self.posting_list(t);
            if let Ok(pos) = list.binary_search_by_key(&(ordinal as u32), |p| p.ordinal) {
                score += self.term_score(list.len(), list[pos].tf, ordinal);
            }
        }
        Ok(score)
    }

    /// Top `k` passages with positive score.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        let tokens = tokenize(query);
        self.search_ordinals(&tokens, k)
            .into_iter()
            .map(|(o, score)| ScoredHit { passage_id: self.passage_ids[o].clone(), score })
            .collect()
    }

    pub fn search_ordinals<S: AsRef<str>>(&self, query_tokens: &[S], k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for t in unique_in_order(query_tokens) {
            let list = self.posting_list(t);
            for p in list {
                let o = p.ordinal as usize;
                *acc.entry(o).or_insert(0.0) += self.term_score(list.len(), p.tf, o);
            }
        }
        let mut hits: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        top_k(&mut hits, k);
        hits
    }
}

/// Sorts by [`rank_order`] and truncates to `k`.
pub fn top_k(hits: &mut Vec<(usize, f64)>, k: usize) {
    if hits.len() > k && k > 0 {
        hits.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        hits.truncate(k);
    }
    hits.sort_by(|a, b| rank_order(*a, *b));
    hits.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TextSpan;
    use alloc::vec;
    use alloc::string::ToString;

    pub(crate) fn passage(id: &str, text: &str) -> Passage {
        Passage {
            id: id.into(),
            doc_id: id.into(),
            title: String::new(),
            text: text.into(),
            sentence_spans: vec![TextSpan::new(0, text.chars().count())],
            word_count: crate::corpus::word_count(text),
        }
    }

    fn fixture() -> InvertedIndex {
        let ps = [passage("p0", "cat sat"), passage("p1", "cat cat dog"), passage("p2", "dog runs fast")];
        InvertedIndex::build(&ps, Bm25Params::default()).unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("The cat's mat"), ["the", "cat", "s", "mat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("COVID-19 survey"), ["covid", "19", "survey"]);
    }

    #[test]
    fn postings_counted() {
        let idx = InvertedIndex::build(&[passage("a", "cat sat"), passage("b", "cat cat dog")], Bm25Params::default())
            .unwrap();
        assert_eq!(idx.posting_list("cat"), &[Posting { ordinal: 0, tf: 1 }, Posting { ordinal: 1, tf: 2 }]);
    }

    #[test]
    fn fixture_statistics() {
        let idx = fixture();
        assert_eq!(idx.doc_lengths(), &[2, 3, 3]);
        assert!((idx.avg_doc_length() - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fixture_score_matches_hand_value() {
        // ln(1.6) * 2.2 / 1.975, evaluated independently
        let idx = fixture();
        let s = idx.score(&["cat"], 0).unwrap();
        assert!((s - 0.523_548_346_501_579).abs() < 1e-12, "{s}");
        assert_eq!(idx.score(&["cat", "cat"], 0).unwrap(), s);
        assert_eq!(idx.score(&["zebra"], 0).unwrap(), 0.0);
        assert!(idx.score(&["cat"], 3).is_err());
    }

    #[test]
    fn search_examples() {
        let idx = fixture();
        let hits = idx.search("cat", 10);
        let ids: Vec<_> = hits.iter().map(|h| h.passage_id.as_str()).collect();
        assert_eq!(ids.len(), 2);
        assert!(ids.contains(&"p0") && ids.contains(&"p1"));
        assert!(hits[0].score >= hits[1].score);
        assert!(idx.search("zebra", 10).is_empty());
        assert_eq!(idx.search("cat", 1).len(), 1);
        assert_eq!(idx.search("cat", 1)[0], hits[0]);
    }

    #[test]
    fn empty_index() {
        let idx = InvertedIndex::build(&[], Bm25Params::default()).unwrap();
        assert_eq!(idx.avg_doc_length(), 0.0);
        assert!(idx.search("anything", 5).is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = InvertedIndex::build(&[passage("a", "x"), passage("a", "y")], Bm25Params::default());
        assert_eq!(r.unwrap_err(), Error::DuplicateId("a".to_string()));
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params { k1: -1.0, b: 0.5 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.5 }.validate().is_err());
    }

    #[test]
    fn insertion_order_irrelevant() {
        let a = [passage("p0", "cat sat"), passage("p1", "cat cat dog"), passage("p2", "dog runs fast")];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        let ia = InvertedIndex::build(&a, Bm25Params::default()).unwrap();
        let ib = InvertedIndex::build(&b, Bm25Params::default()).unwrap();
        assert_eq!(ia, ib);
    }

    #[test]
    fn idf_nonnegative() {
        for n in 0..50 {
            for df in 0..=n {
                assert!(idf(n, df) >= 0.0);
            }
        }
    }
}
