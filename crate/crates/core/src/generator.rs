//! Synthetic (sentence, answer, question) generation and BM25 negative mining.
//!
//! The generator here is heuristic: answer candidates come from surface
//! patterns (numbers, years, capitalized runs, quotations) and questions from
//! per-kind cloze templates. Any other generator only has to produce
//! [`SyntheticExample`]s for a passage.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{contains_answer, Passage, PassageStore, TextSpan};
use crate::hash::substream;
use crate::lexical::InvertedIndex;
use crate::{Error, Result};

pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_QUESTIONS_PER_PASSAGE: usize = 4;
pub const DEFAULT_NEGATIVE_DEPTH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { top_p: DEFAULT_TOP_P, top_k: DEFAULT_TOP_K, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidArgument(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// The support and probabilities sample_truncated draws from, most probable first.
///
/// Top-k truncation happens first (ties to the lower index); the nucleus is
/// then the shortest prefix whose renormalized mass reaches `top_p`.
pub fn truncated_distribution(weights: &[f64], config: &SamplerConfig) -> Result<Vec<(usize, f64)>> {
    config.validate()?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("at least one weight must be positive".into()));
    }
    let mut ranked: Vec<(usize, f64)> =
        weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (i, w / total)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked.truncate(config.top_k);

    let kept_mass: f64 = ranked.iter().map(|e| e.1).sum();
    let mut cumulative = 0.0;
    let mut cut = ranked.len();
    for (i, e) in ranked.iter().enumerate() {
        cumulative += e.1 / kept_mass;
        if cumulative >= config.top_p {
            cut = i + 1;
            break;
        }
    }
    ranked.truncate(cut);
    let mass: f64 = ranked.iter().map(|e| e.1).sum();
    for e in &mut ranked {
        e.1 /= mass;
    }
    Ok(ranked)
}

/// Draws one index under top-k then top-p truncation.
pub fn sample_truncated<R: Rng + ?Sized>(weights: &[f64], config: &SamplerConfig, rng: &mut R) -> Result<usize> {
    let dist = truncated_distribution(weights, config)?;
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for &(i, p) in &dist {
        cumulative += p;
        if u < cumulative {
            return Ok(i);
        }
    }
    Ok(dist[dist.len() - 1].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Number,
    DateLike,
    CapitalizedSpan,
    QuotedSpan,
}

impl CandidateKind {
    pub fn wh_phrase(self) -> &'static str {
        match self {
            CandidateKind::DateLike => "when does",
            CandidateKind::Number => "how many",
            CandidateKind::CapitalizedSpan => "who or what",
            CandidateKind::QuotedSpan => "what is",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateWeights {
    pub number: f64,
    pub capitalized: f64,
    pub quoted: f64,
}

impl Default for CandidateWeights {
    fn default() -> Self {
        CandidateWeights { number: 2.0, capitalized: 1.5, quoted: 1.0 }
    }
}

impl CandidateWeights {
    pub fn weight(&self, kind: CandidateKind) -> f64 {
        match kind {
            CandidateKind::Number | CandidateKind::DateLike => self.number,
            CandidateKind::CapitalizedSpan => self.capitalized,
            CandidateKind::QuotedSpan => self.quoted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub sentence_index: usize,
    /// Offsets within the passage text.
    pub span: TextSpan,
    pub surface: String,
    pub kind: CandidateKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub passage_id: String,
    pub sentence: TextSpan,
    pub answer: CandidateAnswer,
    pub question: String,
    pub negative_passage_id: Option<String>,
}

struct Word {
    // char offsets of the word with surrounding punctuation stripped
    core: TextSpan,
    trailing_punct: bool,
}

fn words_in(chars: &[char], range: TextSpan) -> Vec<Word> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < range.end && !chars[i].is_whitespace() {
            i += 1;
        }
        let (mut lo, mut hi) = (start, i);
        while lo < hi && !chars[lo].is_alphanumeric() {
            lo += 1;
        }
        while hi > lo && !chars[hi - 1].is_alphanumeric() {
            hi -= 1;
        }
        if lo < hi {
            out.push(Word { core: TextSpan::new(lo, hi), trailing_punct: hi < i });
        }
    }
    out
}

fn numeric_kind(chars: &[char]) -> Option<CandidateKind> {
    let first_last_digit = chars.first()?.is_ascii_digit() && chars.last()?.is_ascii_digit();
    if !first_last_digit || !chars.iter().all(|c| c.is_ascii_digit() || *c == ',' || *c == '.') {
        return None;
    }
    if chars.len() == 4 && chars.iter().all(char::is_ascii_digit) {
        let year: u32 = chars.iter().fold(0, |acc, c| acc * 10 + c.to_digit(10).unwrap_or(0));
        if (1000..=2099).contains(&year) {
            return Some(CandidateKind::DateLike);
        }
    }
    Some(CandidateKind::Number)
}

const MAX_CAPITALIZED_RUN: usize = 5;

fn is_open_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201c}')
}

fn is_close_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201d}')
}

/// Heuristic answer candidates, deduplicated by span and ordered by position.
pub fn extract_answer_candidates(passage: &Passage, weights: &CandidateWeights) -> Vec<CandidateAnswer> {
    let chars: Vec<char> = passage.text.chars().collect();
    let mut found: Vec<(usize, TextSpan, CandidateKind)> = Vec::new();
    for (si, &sentence) in passage.sentence_spans.iter().enumerate() {
        if sentence.end > chars.len() {
            continue;
        }
        let words = words_in(&chars, sentence);
        for w in &words {
            if let Some(kind) = numeric_kind(&chars[w.core.start..w.core.end]) {
                found.push((si, w.core, kind));
            }
        }

        let mut run: Vec<TextSpan> = Vec::new();
        let mut flush = |run: &mut Vec<TextSpan>| {
            if !run.is_empty() && run.len() <= MAX_CAPITALIZED_RUN {
                found.push((si, TextSpan::new(run[0].start, run[run.len() - 1].end), CandidateKind::CapitalizedSpan));
            }
            run.clear();
        };
        for (wi, w) in words.iter().enumerate() {
            let capitalized = wi > 0 && chars[w.core.start].is_uppercase();
            if capitalized {
                run.push(w.core);
                if w.trailing_punct {
                    flush(&mut run);
                }
            } else {
                flush(&mut run);
            }
        }
        flush(&mut run);

        let mut i = sentence.start;
        while i < sentence.end {
            if is_open_quote(chars[i]) {
                if let Some(close) = (i + 1..sentence.end).find(|&j| is_close_quote(chars[j])) {
                    let (mut lo, mut hi) = (i + 1, close);
                    while lo < hi && chars[lo].is_whitespace() {
                        lo += 1;
                    }
                    while hi > lo && chars[hi - 1].is_whitespace() {
                        hi -= 1;
                    }
                    if lo < hi {
                        found.push((si, TextSpan::new(lo, hi), CandidateKind::QuotedSpan));
                    }
                    i = close + 1;
                    continue;
                }
            }
            i += 1;
        }
    }

    found.sort_by_key(|&(_, span, _)| span);
    found.dedup_by_key(|e| e.1);
    found
        .into_iter()
        .map(|(sentence_index, span, kind)| CandidateAnswer {
            sentence_index,
            span,
            surface: chars[span.start..span.end].iter().collect(),
            kind,
            weight: weights.weight(kind),
        })
        .collect()
}

/// Cloze question: the answer sentence with the answer removed, fronted by the
/// kind's wh-phrase, lowercased and ending in `?`.
pub fn generate_question(passage: &Passage, answer: &CandidateAnswer) -> Result<String> {
    let sentence = passage
        .sentence_spans
        .get(answer.sentence_index)
        .copied()
        .filter(|s| s.contains(&answer.span))
        .ok_or_else(|| Error::InvalidArgument("answer span outside its sentence".into()))?;
    let before = TextSpan::new(sentence.start, answer.span.start).slice(&passage.text);
    let after = TextSpan::new(answer.span.end, sentence.end).slice(&passage.text);
    let (Some(before), Some(after)) = (before, after) else {
        return Err(Error::InvalidArgument("answer span outside passage text".into()));
    };
    let joined = format!("{before} {after}");
    let mut rest = String::new();
    for w in joined.split_whitespace() {
        if !rest.is_empty() {
            rest.push(' ');
        }
        rest.push_str(w);
    }
    let rest = rest.trim_end_matches(|c: char| matches!(c, '.' | '!' | '?') || c.is_whitespace());
    let mut q = String::from(answer.kind.wh_phrase());
    if !rest.is_empty() {
        q.push(' ');
        q.push_str(rest);
    }
    q.push('?');
    Ok(q.chars().flat_map(char::to_lowercase).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default = "default_questions")]
    pub n_questions: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub weights: CandidateWeights,
    #[serde(default = "default_depth")]
    pub negative_depth: usize,
}

fn default_questions() -> usize {
    DEFAULT_QUESTIONS_PER_PASSAGE
}

fn default_depth() -> usize {
    DEFAULT_NEGATIVE_DEPTH
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_questions: DEFAULT_QUESTIONS_PER_PASSAGE,
            sampler: SamplerConfig::default(),
            weights: CandidateWeights::default(),
            negative_depth: DEFAULT_NEGATIVE_DEPTH,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.n_questions == 0 {
            return Err(Error::InvalidArgument("n_questions must be >= 1".into()));
        }
        if self.negative_depth == 0 {
            return Err(Error::InvalidArgument("negative_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Up to `n_questions` distinct examples for one passage; negatives unset.
pub fn generate_examples<R: Rng + ?Sized>(
    passage: &Passage,
    n_questions: usize,
    sampler: &SamplerConfig,
    weights: &CandidateWeights,
    rng: &mut R,
) -> Result<Vec<SyntheticExample>> {
    if n_questions == 0 {
        return Err(Error::InvalidArgument("n_questions must be >= 1".into()));
    }
    let candidates = extract_answer_candidates(passage, weights);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let cand_weights: Vec<f64> = candidates.iter().map(|c| c.weight).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..n_questions {
        let answer = &candidates[sample_truncated(&cand_weights, sampler, rng)?];
        let question = generate_question(passage, answer)?;
        if seen.insert((answer.span, question.clone())) {
            out.push(SyntheticExample {
                passage_id: passage.id.clone(),
                sentence: passage.sentence_spans[answer.sentence_index],
                answer: answer.clone(),
                question,
                negative_passage_id: None,
            });
        }
    }
    Ok(out)
}

/// A BM25 hit for the question that lacks the answer and is not the source passage.
pub fn mine_negative<R: Rng + ?Sized>(
    index: &InvertedIndex,
    example: &SyntheticExample,
    passages: &PassageStore,
    depth: usize,
    rng: &mut R,
) -> Option<String> {
    let pool: Vec<String> = index
        .search(&example.question, depth)
        .into_iter()
        .filter(|h| h.passage_id != example.passage_id)
        .filter(|h| passages.get(&h.passage_id).is_some_and(|p| !contains_answer(p, &[&example.answer.surface])))
        .map(|h| h.passage_id)
        .collect();
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.gen_range(0..pool.len())].clone())
    }
}

/// Generation plus negative mining for one passage on its own rng substream.
pub fn generate_for_passage(
    passage: &Passage,
    index: &InvertedIndex,
    passages: &PassageStore,
    config: &GeneratorConfig,
) -> Result<Vec<SyntheticExample>> {
    let mut rng = substream(config.sampler.seed, &format!("generate/{}", passage.id), 0);
    let mut examples = generate_examples(passage, config.n_questions, &config.sampler, &config.weights, &mut rng)?;
    for ex in &mut examples {
        ex.negative_passage_id = mine_negative(index, ex, passages, config.negative_depth, &mut rng);
    }
    Ok(examples)
}

/// Runs [`generate_for_passage`] over every passage in store order.
pub fn generate_corpus(
    passages: &PassageStore,
    index: &InvertedIndex,
    config: &GeneratorConfig,
) -> Result<Vec<SyntheticExample>> {
    config.validate()?;
    let mut out = Vec::new();
    for p in passages.passages() {
        out.extend(generate_for_passage(p, index, passages, config)?);
    }
    Ok(out)
}

/// Checks the containment premise: the answer surface is where its span says.
pub fn validate_example(example: &SyntheticExample, passage: &Passage) -> Result<()> {
    if example.question.is_empty() {
        return Err(Error::Invariant("empty question".into()));
    }
    if example.answer.span.slice(&passage.text) != Some(example.answer.surface.as_str()) {
        return Err(Error::Invariant(format!("answer {:?} not found at its span", example.answer.surface)));
    }
    if example.negative_passage_id.as_deref() == Some(passage.id.as_str()) {
        return Err(Error::Invariant("negative equals source passage".to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_document, Document};
    use crate::lexical::Bm25Params;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn passage(text: &str) -> Passage {
        let doc = Document { id: "d".into(), title: String::new(), text: text.into() };
        chunk_document(&doc, 120).unwrap().remove(0)
    }

    fn cfg(top_p: f64, top_k: usize) -> SamplerConfig {
        SamplerConfig { top_p, top_k, seed: 0 }
    }

    #[test]
    fn truncation_examples() {
        let d = truncated_distribution(&[0.5, 0.3, 0.2], &cfg(1.0, 2)).unwrap();
        assert_eq!(d.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
        assert!((d[0].1 - 0.625).abs() < 1e-12 && (d[1].1 - 0.375).abs() < 1e-12);
        assert_eq!(truncated_distribution(&[0.9, 0.1], &cfg(0.5, 10)).unwrap(), vec![(0, 1.0)]);
        assert_eq!(truncated_distribution(&[0.0, 3.0, 0.0], &cfg(0.95, 10)).unwrap(), vec![(1, 1.0)]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let d = truncated_distribution(&[1.0, 1.0, 1.0], &cfg(1.0, 2)).unwrap();
        assert_eq!(d.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn sampler_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_truncated(&[0.0, 0.0], &cfg(0.9, 3), &mut rng).is_err());
        assert!(sample_truncated(&[], &cfg(0.9, 3), &mut rng).is_err());
        assert!(sample_truncated(&[1.0, -1.0], &cfg(0.9, 3), &mut rng).is_err());
        assert!(sample_truncated(&[1.0], &cfg(0.0, 3), &mut rng).is_err());
        assert!(sample_truncated(&[1.0], &cfg(0.5, 0), &mut rng).is_err());
        for _ in 0..100 {
            assert_eq!(sample_truncated(&[0.0, 2.0], &cfg(0.95, 10), &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn year_candidate() {
        let p = passage("The African Great Lakes nation of Tanzania dates formally from 1964, when it was formed.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        let year = cands.iter().find(|c| c.surface == "1964").unwrap();
        assert_eq!(year.kind, CandidateKind::DateLike);
        assert_eq!(year.weight, 2.0);
        assert!(cands.iter().any(|c| c.surface == "African Great Lakes" && c.kind == CandidateKind::CapitalizedSpan));
        assert!(cands.iter().any(|c| c.surface == "Tanzania"));
    }

    #[test]
    fn capitalized_head() {
        let p = passage("Later it became a British mandate.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].surface, "British");
        assert_eq!(cands[0].kind, CandidateKind::CapitalizedSpan);
    }

    #[test]
    fn no_candidates_in_plain_text() {
        let p = passage("all lowercase words here. nothing to see.");
        assert!(extract_answer_candidates(&p, &CandidateWeights::default()).is_empty());
    }

    #[test]
    fn quoted_and_numbers() {
        let p = passage("he sang \"Blue Moon\" about 3,500 times in 12.5 hours.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        let surfaces: Vec<_> = cands.iter().map(|c| (c.surface.as_str(), c.kind)).collect();
        // the capitalized run claims the span first; quoted duplicate collapses
        assert!(surfaces.contains(&("Blue Moon", CandidateKind::CapitalizedSpan)));
        assert!(surfaces.contains(&("3,500", CandidateKind::Number)));
        assert!(surfaces.contains(&("12.5", CandidateKind::Number)));
        assert_eq!(cands.iter().filter(|c| c.surface == "Blue Moon").count(), 1);
        let p = passage("she said \"go home now\" loudly.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        assert_eq!(cands[0].surface, "go home now");
        assert_eq!(cands[0].kind, CandidateKind::QuotedSpan);
    }

    #[test]
    fn long_capitalized_runs_skipped() {
        let p = passage("we met A B C D E F today.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        assert!(cands.is_empty());
    }

    #[test]
    fn question_templates() {
        let p = passage("Tanzania dates formally from 1964.");
        let cands = extract_answer_candidates(&p, &CandidateWeights::default());
        let year = cands.iter().find(|c| c.surface == "1964").unwrap();
        let q = generate_question(&p, year).unwrap();
        assert_eq!(q, "when does tanzania dates formally from?");
        assert_eq!(generate_question(&p, year).unwrap(), q);

        let p = passage("go \"Home\"");
        let whole = CandidateAnswer {
            sentence_index: 0,
            span: TextSpan::new(0, 9),
            surface: p.text.clone(),
            kind: CandidateKind::QuotedSpan,
            weight: 1.0,
        };
        assert_eq!(generate_question(&p, &whole).unwrap(), "what is?");
    }

    #[test]
    fn examples_deduplicated() {
        let p = passage("it happened in 1990.");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = generate_examples(&p, 4, &SamplerConfig::default(), &CandidateWeights::default(), &mut rng).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].question, "when does it happened in?");
        let p = passage("nothing here.");
        assert!(generate_examples(&p, 4, &SamplerConfig::default(), &CandidateWeights::default(), &mut rng)
            .unwrap()
            .is_empty());
    }

    fn plain(id: &str, text: &str) -> Passage {
        crate::toy::plain_passage(id, text)
    }

    fn example(source: &str, question: &str, answer: &str) -> SyntheticExample {
        SyntheticExample {
            passage_id: source.into(),
            sentence: TextSpan::new(0, 1),
            answer: CandidateAnswer {
                sentence_index: 0,
                span: TextSpan::new(0, 1),
                surface: answer.into(),
                kind: CandidateKind::CapitalizedSpan,
                weight: 1.5,
            },
            question: question.into(),
            negative_passage_id: None,
        }
    }

    #[test]
    fn mining_filters() {
        let ps = vec![plain("src", "paris is big Rome"), plain("neg", "paris is old"), plain("far", "unrelated")];
        let store = PassageStore::new(ps.clone()).unwrap();
        let idx = InvertedIndex::build(&ps, Bm25Params::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = example("src", "where is paris", "Rome");
        assert_eq!(mine_negative(&idx, &ex, &store, 50, &mut rng), Some("neg".into()));
        let ex = example("src", "where is paris", "paris");
        assert_eq!(mine_negative(&idx, &ex, &store, 50, &mut rng), None);
        let ex = example("src", "zzz", "Rome");
        assert_eq!(mine_negative(&idx, &ex, &store, 50, &mut rng), None);
    }

    #[test]
    fn corpus_generation_is_deterministic() {
        let ps: Vec<Passage> = (0..20)
            .map(|i| plain(&format!("p{i:02}"), &format!("Alice Smith{i} moved to Town{} in {}.", i % 3, 1900 + i)))
            .collect();
        let store = PassageStore::new(ps.clone()).unwrap();
        let idx = InvertedIndex::build(&ps, Bm25Params::default()).unwrap();
        let cfg = GeneratorConfig { sampler: SamplerConfig { seed: 7, ..Default::default() }, ..Default::default() };
        let a = generate_corpus(&store, &idx, &cfg).unwrap();
        let b = generate_corpus(&store, &idx, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        for ex in &a {
            let p = store.get(&ex.passage_id).unwrap();
            validate_example(ex, p).unwrap();
            if let Some(neg) = &ex.negative_passage_id {
                assert!(!contains_answer(store.get(neg).unwrap(), &[&ex.answer.surface]));
            }
        }
    }
}
