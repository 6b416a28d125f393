//! Seeded synthetic biography corpus with gold questions.
//!
//! Every person gets five short documents, one per facet (birth, career,
//! prize, relocation, book). Gold questions name the person and the facet and
//! are phrased unlike the generator's cloze questions. Train and test
//! questions cover disjoint passages but overlapping people.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{word_count, Document, Passage, QAPair, TextSpan};
use crate::hash::substream;

pub const FACETS: usize = 5;

const FIRST: [&str; 20] = [
    "Ada", "Boris", "Carla", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ingrid", "Jonas", "Kira", "Lars", "Mira",
    "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tara",
];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "dor", "vel", "sa", "tu", "bri", "zan", "ol", "pe", "qui", "rha", "sel", "tor", "ume",
    "vig", "wen", "xa", "yor", "zel", "ani", "bex",
];

const PROFESSIONS: [&str; 12] = [
    "engineer", "painter", "chemist", "sailor", "teacher", "surgeon", "architect", "journalist", "pilot", "geologist",
    "composer", "lawyer",
];

const FIELDS: [&str; 8] = ["physics", "poetry", "medicine", "music", "chemistry", "history", "design", "botany"];

const GOODS: [&str; 8] = ["bakery", "bookshop", "pharmacy", "tailor shop", "workshop", "gallery", "clinic", "tea house"];

/// Passage with a single sentence span covering `text`.
pub fn plain_passage(id: &str, text: &str) -> Passage {
    Passage {
        id: id.into(),
        doc_id: id.into(),
        title: String::new(),
        text: text.into(),
        sentence_spans: vec![TextSpan::new(0, text.chars().count())],
        word_count: word_count(text),
    }
}

/// Deterministic pseudo-words, capitalized, distinct within one call.
fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, suffix: &str) -> Vec<String> {
    let mut all: Vec<String> = Vec::new();
    for a in SYLLABLES {
        for b in SYLLABLES {
            if a != b {
                let mut w = format!("{a}{b}{suffix}");
                w[..1].make_ascii_uppercase();
                all.push(w);
            }
        }
    }
    all.shuffle(rng);
    all.truncate(n);
    all
}

struct Person {
    first: &'static str,
    last: String,
    birth_city: String,
    birth_year: u32,
    profession: &'static str,
    org: String,
    prize: String,
    prize_year: u32,
    field: &'static str,
    move_city: String,
    move_year: u32,
    shop: &'static str,
    book: String,
    book_year: u32,
}

impl Person {
    fn name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }

    fn facet_text(&self, facet: usize) -> String {
        let (f, l, n) = (self.first, &self.last, self.name());
        match facet {
            0 => format!(
                "{n} was born in {c} in {y}. The {l} family had lived in {c} for generations.",
                c = self.birth_city,
                y = self.birth_year
            ),
            1 => format!(
                "{n} worked as a {p} at {o} for many years. At {o}, {f} was known for careful work.",
                p = self.profession,
                o = self.org
            ),
            2 => format!(
                "In {y}, {n} received the {pr} prize for {fl}. The {pr} prize honored the work of {l}.",
                y = self.prize_year,
                pr = self.prize,
                fl = self.field
            ),
            3 => format!(
                "{n} moved to {c} in {y}. In {c}, {f} opened a small {s}.",
                c = self.move_city,
                y = self.move_year,
                s = self.shop
            ),
            _ => format!(
                "{n} wrote a book titled {b} in {y}. Critics praised {b} as the best work of {l}.",
                b = self.book,
                y = self.book_year
            ),
        }
    }

    fn question(&self, facet: usize) -> (String, String) {
        let name = self.name().to_lowercase();
        match facet {
            0 => (format!("where was {name} born?"), self.birth_city.clone()),
            1 => (format!("which company did {name} work for?"), self.org.clone()),
            2 => (format!("which prize did {name} receive?"), self.prize.clone()),
            3 => (format!("where did {name} move to?"), self.move_city.clone()),
            _ => (format!("what book did {name} write?"), self.book.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    pub documents: Vec<Document>,
    pub train_qa: Vec<QAPair>,
    pub test_qa: Vec<QAPair>,
}

fn doc_id(person: usize, facet: usize) -> String {
    format!("person{person:03}-f{facet}")
}

impl ToyWorld {
    /// About `n_docs` documents (rounded up to whole people, at most 2000),
    /// with `n_train` and `n_test` questions on disjoint passages.
    pub fn generate(seed: u64, n_docs: usize, n_train: usize, n_test: usize) -> Self {
        let mut rng = substream(seed, "toy-world", 0);
        let n_people = n_docs.div_ceil(FACETS).min(400);
        let lasts = pseudo_words(&mut rng, n_people, "");
        let cities = pseudo_words(&mut rng, 80, "ford");
        let orgs = pseudo_words(&mut rng, 40, "corp");
        let prizes = pseudo_words(&mut rng, n_people, "an");
        let books = pseudo_words(&mut rng, n_people, "ia");
        let pick = |rng: &mut ChaCha8Rng, v: &[String]| v[rng.gen_range(0..v.len())].clone();
        let people: Vec<Person> = (0..n_people)
            .map(|i| {
                let birth_year = rng.gen_range(1800..1950);
                Person {
                    first: FIRST[rng.gen_range(0..FIRST.len())],
                    last: lasts[i].clone(),
                    birth_city: pick(&mut rng, &cities),
                    birth_year,
                    profession: PROFESSIONS[rng.gen_range(0..PROFESSIONS.len())],
                    org: pick(&mut rng, &orgs),
                    prize: prizes[i].clone(),
                    prize_year: birth_year + rng.gen_range(25..60),
                    field: FIELDS[rng.gen_range(0..FIELDS.len())],
                    move_city: pick(&mut rng, &cities),
                    move_year: birth_year + rng.gen_range(18..40),
                    shop: GOODS[rng.gen_range(0..GOODS.len())],
                    book: books[i].clone(),
                    book_year: birth_year + rng.gen_range(20..70),
                }
            })
            .collect();
        let documents: Vec<Document> = people
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                (0..FACETS).map(move |f| Document { id: doc_id(i, f), title: p.name(), text: p.facet_text(f) })
            })
            .collect();

        let mut slots: Vec<(usize, usize)> = (0..n_people).flat_map(|i| (0..FACETS).map(move |f| (i, f))).collect();
        slots.shuffle(&mut rng);
        let make = |slots: &[(usize, usize)]| -> Vec<QAPair> {
            slots
                .iter()
                .map(|&(i, f)| {
                    let (question, answer) = people[i].question(f);
                    QAPair { question, answers: vec![answer], gold_passage_id: Some(format!("{}:0", doc_id(i, f))) }
                })
                .collect()
        };
        let n_train = n_train.min(slots.len());
        let n_test = n_test.min(slots.len() - n_train);
        ToyWorld {
            train_qa: make(&slots[..n_train]),
            test_qa: make(&slots[n_train..n_train + n_test]),
            documents,
        }
    }
}
