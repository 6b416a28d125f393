//! Documents, sentence-preserving passage chunking and answer matching.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::{Error, Result};

pub const DEFAULT_MAX_WORDS: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

/// Half-open range of character (Unicode scalar) offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
}

impl TextSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TextSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &TextSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// The substring this span addresses, or `None` if out of range.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.start > self.end {
            return None;
        }
        let lo = char_to_byte(text, self.start)?;
        let hi = char_to_byte(text, self.end)?;
        Some(&text[lo..hi])
    }
}

impl From<(usize, usize)> for TextSpan {
    fn from((start, end): (usize, usize)) -> Self {
        TextSpan { start, end }
    }
}

impl From<TextSpan> for (usize, usize) {
    fn from(s: TextSpan) -> Self {
        (s.start, s.end)
    }
}

fn char_to_byte(text: &str, offset: usize) -> Option<usize> {
    if offset == 0 {
        return Some(0);
    }
    match text.char_indices().nth(offset) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == offset => Some(text.len()),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub sentence_spans: Vec<TextSpan>,
    pub word_count: usize,
}

impl Passage {
    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        self.sentence_spans.get(index)?.slice(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_passage_id: Option<String>,
}

impl QAPair {
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::InvalidArgument(format!("question {:?} has no answers", self.question)));
        }
        if self.answers.iter().any(|a| normalize_answer(a).is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "question {:?} has an answer that is empty after normalization",
                self.question
            )));
        }
        Ok(())
    }
}

/// Passages addressable by id, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: BTreeMap<String, usize>,
}

impl PassageStore {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        Ok(PassageStore { passages, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn require(&self, id: &str) -> Result<&Passage> {
        self.get(id).ok_or_else(|| Error::UnknownPassage(id.to_string()))
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Rejects duplicate ids and empty text.
pub fn validate_documents(docs: &[Document]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        if d.id.is_empty() {
            return Err(Error::Malformed { line: i + 1, message: "empty document id".into() });
        }
        if d.text.trim().is_empty() {
            return Err(Error::Malformed { line: i + 1, message: format!("document {:?} has empty text", d.id) });
        }
        if seen.insert(d.id.as_str(), ()).is_some() {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Rule-based sentence splitter.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace or end of text.
/// A period directly after a lone uppercase letter ("J.") does not end a
/// sentence. Whitespace between sentences belongs to no span.
pub fn sentence_split(text: &str) -> Vec<TextSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let skip_ws = |mut i: usize| {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        i
    };
    let initial_guard = |j: usize| {
        j >= 1 && chars[j - 1].is_uppercase() && (j == 1 || !chars[j - 2].is_alphanumeric())
    };

    let mut spans = Vec::new();
    let mut start = skip_ws(0);
    let mut j = start;
    while j < n {
        let c = chars[j];
        if is_terminator(c) && (j + 1 == n || chars[j + 1].is_whitespace()) && !(c == '.' && initial_guard(j)) {
            spans.push(TextSpan::new(start, j + 1));
            start = skip_ws(j + 1);
            j = start;
            continue;
        }
        j += 1;
    }
    if start < n {
        let mut end = n;
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push(TextSpan::new(start, end));
    }
    spans
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

struct PassageBuilder<'a> {
    words: Vec<&'a str>,
    // word count of each sentence piece, in order
    pieces: Vec<usize>,
}

impl<'a> PassageBuilder<'a> {
    fn new() -> Self {
        PassageBuilder { words: Vec::new(), pieces: Vec::new() }
    }

    fn push(&mut self, piece: &[&'a str]) {
        self.words.extend_from_slice(piece);
        self.pieces.push(piece.len());
    }

    fn finish(&mut self, doc: &Document, ordinal: usize) -> Passage {
        let mut text = String::new();
        let mut spans = Vec::with_capacity(self.pieces.len());
        let mut offset = 0usize;
        let mut w = 0usize;
        for &count in &self.pieces {
            if !text.is_empty() {
                text.push(' ');
                offset += 1;
            }
            let start = offset;
            for (k, word) in self.words[w..w + count].iter().enumerate() {
                if k > 0 {
                    text.push(' ');
                    offset += 1;
                }
                text.push_str(word);
                offset += word.chars().count();
            }
            spans.push(TextSpan::new(start, offset));
            w += count;
        }
        let passage = Passage {
            id: format!("{}:{}", doc.id, ordinal),
            doc_id: doc.id.clone(),
            title: doc.title.clone(),
            text,
            sentence_spans: spans,
            word_count: self.words.len(),
        };
        self.words.clear();
        self.pieces.clear();
        passage
    }
}

/// Greedy sentence packing into passages of at most `max_words` words.
///
/// Sentences longer than `max_words` are cut at word boundaries into
/// `max_words`-sized pieces; the trailing remainder may share a passage with
/// the following sentences.
pub fn chunk_document(doc: &Document, max_words: usize) -> Result<Vec<Passage>> {
    if max_words == 0 {
        return Err(Error::InvalidArgument("max_words must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut current = PassageBuilder::new();
    for span in sentence_split(&doc.text) {
        let sentence = span.slice(&doc.text).unwrap_or_default();
        let words: Vec<&str> = sentence.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        if words.len() > max_words {
            if !current.words.is_empty() {
                out.push(current.finish(doc, out.len()));
            }
            let mut pieces = words.chunks(max_words).peekable();
            while let Some(piece) = pieces.next() {
                current.push(piece);
                if pieces.peek().is_some() {
                    out.push(current.finish(doc, out.len()));
                }
            }
            if current.words.len() == max_words {
                out.push(current.finish(doc, out.len()));
            }
            continue;
        }
        if current.words.len() + words.len() > max_words {
            out.push(current.finish(doc, out.len()));
        }
        current.push(&words);
    }
    if !current.words.is_empty() {
        out.push(current.finish(doc, out.len()));
    }
    Ok(out)
}

/// Chunks every document, preserving document order.
pub fn chunk_corpus(docs: &[Document], max_words: usize) -> Result<Vec<Passage>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(chunk_document(d, max_words)?);
    }
    Ok(out)
}

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// NFKC, lowercase, punctuation to spaces, whitespace collapsed and trimmed.
pub fn normalize_answer(text: &str) -> String {
    let folded: String = text.nfkc().flat_map(char::to_lowercase).collect();
    // lowercasing can leave text that is no longer NFKC-normal
    let folded: String = folded.nfkc().map(|c| if is_punctuation(c) { ' ' } else { c }).collect();
    let mut out = String::with_capacity(folded.len());
    for w in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

fn contains_subsequence(hay: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// True iff some answer's normalized tokens occur contiguously in the
/// normalized passage text.
pub fn contains_answer<S: AsRef<str>>(passage: &Passage, answers: &[S]) -> bool {
    text_contains_answer(&passage.text, answers)
}

pub fn text_contains_answer<S: AsRef<str>>(text: &str, answers: &[S]) -> bool {
    let norm = normalize_answer(text);
    let hay: Vec<&str> = norm.split_whitespace().collect();
    answers.iter().any(|a| {
        let a = normalize_answer(a.as_ref());
        let needle: Vec<&str> = a.split_whitespace().collect();
        contains_subsequence(&hay, &needle)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc(text: &str) -> Document {
        Document { id: "d".into(), title: String::new(), text: text.into() }
    }

    fn sentence_of(words: usize, tag: &str) -> String {
        let mut s: Vec<String> = (0..words).map(|i| format!("{tag}{i}")).collect();
        s.last_mut().unwrap().push('.');
        s.join(" ")
    }

    #[test]
    fn splitter_examples() {
        assert_eq!(sentence_split("A b. C d."), vec![TextSpan::new(0, 4), TextSpan::new(5, 9)]);
        assert_eq!(sentence_split("no terminator"), vec![TextSpan::new(0, 13)]);
        assert_eq!(
            sentence_split("J. Smith ran. He won."),
            vec![TextSpan::new(0, 13), TextSpan::new(14, 21)]
        );
        assert!(sentence_split("   ").is_empty());
        assert_eq!(sentence_split("Why? Yes!"), vec![TextSpan::new(0, 4), TextSpan::new(5, 9)]);
        // decimal point is not followed by whitespace
        assert_eq!(sentence_split("Pi is 3.14 ok"), vec![TextSpan::new(0, 13)]);
    }

    #[test]
    fn greedy_packing() {
        let text = [sentence_of(50, "a"), sentence_of(50, "b"), sentence_of(50, "c")].join(" ");
        let ps = chunk_document(&doc(&text), 120).unwrap();
        let counts: Vec<usize> = ps.iter().map(|p| p.word_count).collect();
        assert_eq!(counts, vec![100, 50]);
        assert_eq!(ps[0].id, "d:0");
        assert_eq!(ps[1].id, "d:1");
        assert_eq!(ps[0].sentence_spans.len(), 2);
    }

    #[test]
    fn single_sentence_fits() {
        let ps = chunk_document(&doc(&sentence_of(100, "w")), 120).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].word_count, 100);
    }

    #[test]
    fn oversized_sentence_hard_split() {
        let ps = chunk_document(&doc(&sentence_of(130, "w")), 120).unwrap();
        let counts: Vec<usize> = ps.iter().map(|p| word_count(&p.text)).collect();
        assert_eq!(counts, vec![120, 10]);
        assert_eq!(ps.iter().map(|p| p.word_count).collect::<Vec<_>>(), counts);
    }

    #[test]
    fn oversized_remainder_packs_with_next_sentence() {
        let text = [sentence_of(125, "a"), sentence_of(20, "b")].join(" ");
        let ps = chunk_document(&doc(&text), 120).unwrap();
        assert_eq!(ps.iter().map(|p| p.word_count).collect::<Vec<_>>(), vec![120, 25]);
        assert_eq!(ps[1].sentence_spans.len(), 2);
    }

    #[test]
    fn spans_address_sentences() {
        let ps = chunk_document(&doc("Héllo  wörld. Second   one!"), 120).unwrap();
        assert_eq!(ps[0].text, "Héllo wörld. Second one!");
        assert_eq!(ps[0].sentence_text(0), Some("Héllo wörld."));
        assert_eq!(ps[0].sentence_text(1), Some("Second one!"));
    }

    #[test]
    fn zero_max_words_rejected() {
        assert!(chunk_document(&doc("a b."), 0).is_err());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("Yaya Touré"), "yaya touré");
        assert_eq!(normalize_answer("  The-Match! "), "the match");
        assert_eq!(normalize_answer("U.S.A."), "u s a");
        assert_eq!(normalize_answer("ﬁve"), "five");
    }

    fn passage(text: &str) -> Passage {
        Passage {
            id: "p".into(),
            doc_id: "d".into(),
            title: String::new(),
            text: text.into(),
            sentence_spans: vec![TextSpan::new(0, text.chars().count())],
            word_count: word_count(text),
        }
    }

    #[test]
    fn containment_examples() {
        assert!(contains_answer(&passage("the number five lies here"), &["five", "5"]));
        assert!(!contains_answer(&passage("dog runs"), &["cat"]));
        assert!(!contains_answer(&passage("the match point"), &["match point extra"]));
        assert!(!contains_answer(&passage("a party"), &["art"]));
        assert!(contains_answer(&passage("Born in the U.S.A., he"), &["u.s.a"]));
        assert!(!contains_answer(&passage("anything"), &["!!!"]));
    }

    #[test]
    fn store_rejects_duplicates() {
        let p = passage("x");
        assert_eq!(PassageStore::new(vec![p.clone(), p]).unwrap_err(), Error::DuplicateId("p".into()));
    }

    #[test]
    fn qa_validation() {
        let qa = QAPair { question: "q".into(), answers: vec![], gold_passage_id: None };
        assert!(qa.validate().is_err());
        let qa = QAPair { question: "q".into(), answers: vec!["--".into()], gold_passage_id: None };
        assert!(qa.validate().is_err());
    }

    #[test]
    fn document_validation() {
        let a = doc("x");
        assert_eq!(validate_documents(&[a.clone(), a]).unwrap_err(), Error::DuplicateId("d".into()));
    }
}
