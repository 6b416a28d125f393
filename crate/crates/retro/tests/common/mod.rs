#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_retro")
}

pub fn retro(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).output().expect("spawn retro")
}

/// Runs `retro` and panics with its stderr unless it exits 0.
pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = retro(dir, args);
    assert!(
        out.status.success(),
        "retro {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub const RUN_CONFIG: &str = r#"{
  "generator": {"seed": 7},
  "trainer": {"seed": 1, "pretrain": {"batch_size": 8}, "finetune": {"batch_size": 32}},
  "eval": {"ks": [1, 5, 20]},
  "paths": {
    "passages": "passages.jsonl",
    "bm25": "bm25.bin",
    "synthetic": "synth.jsonl",
    "train_qa": "train_qa.jsonl",
    "test_qa": "test_qa.jsonl"
  }
}
"#;

/// Toy corpus, passage store, BM25 index and run config in `dir`.
pub fn prepare_world(dir: &Path, docs: usize) {
    let docs = docs.to_string();
    ok(dir, &["toy-world", "--seed", "11", "--docs", &docs, "--train", "50", "--test", "50", "--out-dir", "."]);
    ok(dir, &["ingest", "--input", "corpus.jsonl", "--format", "jsonl", "--out", "passages.jsonl"]);
    ok(dir, &["index-bm25", "--passages", "passages.jsonl", "--out", "bm25.bin"]);
    std::fs::write(dir.join("run.json"), RUN_CONFIG).unwrap();
}

/// Every regular file under `dir`, relative and sorted.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
