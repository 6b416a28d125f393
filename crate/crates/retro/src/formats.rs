//! Line-oriented text formats: corpora, passage stores, QA sets, synthetic
//! examples, training logs, retrieval runs and accuracy reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use retro_core::corpus::{Document, Passage, PassageStore, QAPair, TextSpan};
use retro_core::experiments::{AccuracyReport, MatrixRow, QueryResult, RetrievalRun, System};
use retro_core::generator::SyntheticExample;
use retro_core::lexical::ScoredHit;
use retro_core::trainer::{EpochLog, SyntheticPool, TrainExample};

use crate::error::{CliError, CliResult, CoreContext};
use crate::fsio::{parse_jsonl, read_jsonl, read_to_string, write_atomic, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

/// Reads a raw corpus, rejecting malformed lines and duplicate ids.
pub fn read_documents(path: &Path, format: CorpusFormat) -> CliResult<Vec<Document>> {
    let text = read_to_string(path)?;
    parse_documents(path, &text, format)
}

pub fn parse_documents(path: &Path, text: &str, format: CorpusFormat) -> CliResult<Vec<Document>> {
    let mut docs = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let doc = match format {
            CorpusFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if !(2..=3).contains(&fields.len()) {
                    return Err(CliError::format(
                        path,
                        Some(line_no),
                        format!("expected id<TAB>text<TAB>title, found {} fields", fields.len()),
                    ));
                }
                Document {
                    id: fields[0].to_string(),
                    text: fields[1].to_string(),
                    title: fields.get(2).copied().unwrap_or_default().to_string(),
                }
            }
            CorpusFormat::Jsonl => serde_json::from_str::<Document>(line)
                .map_err(|e| CliError::format(path, Some(line_no), e.to_string()))?,
        };
        if doc.id.is_empty() {
            return Err(CliError::format(path, Some(line_no), "empty document id"));
        }
        if let Some(prev) = first_line.insert(doc.id.clone(), line_no) {
            return Err(CliError::format(
                path,
                Some(line_no),
                format!("duplicate document id {:?} (first seen on line {prev})", doc.id),
            ));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_passages(path: &Path) -> CliResult<PassageStore> {
    let passages: Vec<Passage> = read_jsonl(path)?;
    PassageStore::new(passages).context(|| format!("{}", path.display()))
}

pub fn write_passages(path: &Path, passages: &[Passage]) -> CliResult<()> {
    write_jsonl(path, passages)
}

pub fn read_qa(path: &Path) -> CliResult<Vec<QAPair>> {
    let text = read_to_string(path)?;
    let pairs: Vec<QAPair> = parse_jsonl(path, &text)?;
    // validation errors carry the line of the offending record
    let lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, _)| i + 1);
    for (pair, line) in pairs.iter().zip(lines) {
        pair.validate().map_err(|e| CliError::format(path, Some(line), e.to_string()))?;
    }
    Ok(pairs)
}

pub fn write_qa(path: &Path, pairs: &[QAPair]) -> CliResult<()> {
    write_jsonl(path, pairs)
}

/// A search query line; any other keys (answers, gold ids) are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct Query {
    pub question: String,
}

pub fn read_queries(path: &Path) -> CliResult<Vec<Query>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRecord {
    pub text: String,
    pub span: TextSpan,
}

/// On-disk form of one generated example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRecord {
    pub passage_id: String,
    pub sentence: TextSpan,
    pub answer: AnswerRecord,
    pub question: String,
    pub negative_passage_id: Option<String>,
}

impl From<&SyntheticExample> for SyntheticRecord {
    fn from(ex: &SyntheticExample) -> Self {
        SyntheticRecord {
            passage_id: ex.passage_id.clone(),
            sentence: ex.sentence,
            answer: AnswerRecord { text: ex.answer.surface.clone(), span: ex.answer.span },
            question: ex.question.clone(),
            negative_passage_id: ex.negative_passage_id.clone(),
        }
    }
}

impl SyntheticRecord {
    pub fn train_example(&self) -> TrainExample {
        TrainExample {
            question: self.question.clone(),
            positive_passage_id: self.passage_id.clone(),
            hard_negative_passage_id: self.negative_passage_id.clone(),
        }
    }
}

pub fn write_synthetic(path: &Path, examples: &[SyntheticExample]) -> CliResult<()> {
    let records: Vec<SyntheticRecord> = examples.iter().map(SyntheticRecord::from).collect();
    write_jsonl(path, &records)
}

pub fn read_synthetic(path: &Path) -> CliResult<Vec<SyntheticRecord>> {
    read_jsonl(path)
}

pub fn synthetic_pool(records: &[SyntheticRecord]) -> SyntheticPool {
    let mut pool = SyntheticPool::default();
    for r in records {
        pool.insert(r.train_example());
    }
    pool
}

pub fn write_train_log(path: &Path, logs: &[EpochLog]) -> CliResult<()> {
    write_jsonl(path, logs)
}

/// One line of a run file: the ranked hits for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLine {
    pub system: System,
    pub depth: usize,
    pub qid: usize,
    pub question: String,
    pub hits: Vec<ScoredHit>,
}

pub fn write_run(path: &Path, run: &RetrievalRun) -> CliResult<()> {
    let lines: Vec<RunLine> = run
        .results
        .iter()
        .map(|r| RunLine {
            system: run.system,
            depth: run.depth,
            qid: r.qid,
            question: r.question.clone(),
            hits: r.hits.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

/// Reads a run; an empty file yields an empty BM25 run of depth 0.
pub fn read_run(path: &Path) -> CliResult<RetrievalRun> {
    let lines: Vec<RunLine> = read_jsonl(path)?;
    let (system, depth) = lines.first().map(|l| (l.system, l.depth)).unwrap_or((System::Bm25, 0));
    if let Some(bad) = lines.iter().find(|l| l.system != system || l.depth != depth) {
        return Err(CliError::format(path, None, format!("mixed system/depth in run (qid {})", bad.qid)));
    }
    Ok(RetrievalRun {
        system,
        depth,
        results: lines.into_iter().map(|l| QueryResult { qid: l.qid, question: l.question, hits: l.hits }).collect(),
    })
}

/// One row of an accuracy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub system: System,
    pub stage: String,
    pub size: Option<usize>,
    pub seed: Option<u64>,
    pub questions: usize,
    pub accuracy: BTreeMap<usize, f64>,
}

impl ReportRow {
    pub fn new(system: System, stage: &str, size: Option<usize>, seed: Option<u64>, report: &AccuracyReport) -> Self {
        ReportRow {
            system,
            stage: stage.to_string(),
            size,
            seed,
            questions: report.questions,
            accuracy: report.accuracy.clone(),
        }
    }
}

impl From<&MatrixRow> for ReportRow {
    fn from(row: &MatrixRow) -> Self {
        ReportRow::new(row.system, &row.stage, Some(row.size), Some(row.seed), &row.report)
    }
}

fn ks_of(rows: &[ReportRow]) -> Vec<usize> {
    let mut ks: Vec<usize> = rows.iter().flat_map(|r| r.accuracy.keys().copied()).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

/// Aligned text table, accuracies in percent.
pub fn render_table(rows: &[ReportRow]) -> String {
    let ks = ks_of(rows);
    let mut header = vec!["system".to_string(), "stage".into(), "size".into(), "seed".into()];
    header.extend(ks.iter().map(|k| format!("top-{k}")));
    let mut cells = vec![header];
    for r in rows {
        let mut line = vec![r.system.as_str().to_string(), r.stage.clone(), opt(r.size), opt(r.seed)];
        line.extend(ks.iter().map(|k| r.accuracy.get(k).map(|a| format!("{:.1}", a * 100.0)).unwrap_or_else(|| "-".into())));
        cells.push(line);
    }
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, line) in cells.iter().enumerate() {
        let mut text = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                text.push_str("  ");
            }
            // text columns left-aligned, numbers right-aligned
            if c < 2 {
                let _ = write!(text, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(text, "{cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let ks = ks_of(rows);
    let mut out = String::from("system,stage,size,seed,questions");
    for k in &ks {
        let _ = write!(out, ",top_{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.system.as_str(),
            r.stage,
            r.size.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.map(|v| v.to_string()).unwrap_or_default(),
            r.questions
        );
        for k in &ks {
            let _ = write!(out, ",{}", r.accuracy.get(k).map(|a| a.to_string()).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

/// Writes `path` as JSON plus the rendered table next to it (`.txt`).
pub fn write_report(path: &Path, rows: &[ReportRow], csv: Option<&Path>) -> CliResult<()> {
    crate::fsio::write_json(path, rows)?;
    let table = render_table(rows);
    write_atomic(&path.with_extension("txt"), |w| w.write_all(table.as_bytes()))?;
    if let Some(csv) = csv {
        let body = render_csv(rows);
        write_atomic(csv, |w| w.write_all(body.as_bytes()))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> CliResult<Vec<ReportRow>> {
    crate::fsio::read_json(path)
}
