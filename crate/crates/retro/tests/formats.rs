use std::path::Path;

use proptest::prelude::*;
use retro::binary::*;
use retro::config::RunConfig;
use retro::formats::*;
use retro::CliError;
use retro_core::corpus::{chunk_corpus, PassageStore};
use retro_core::dense::DenseIndex;
use retro_core::encoder::{DualEncoder, EncoderConfig};
use retro_core::experiments::{RetrievalRun, System};
use retro_core::generator::{generate_corpus, GeneratorConfig};
use retro_core::lexical::{Bm25Params, InvertedIndex};
use retro_core::toy::ToyWorld;

fn toy_store() -> PassageStore {
    let w = ToyWorld::generate(2, 40, 0, 0);
    PassageStore::new(chunk_corpus(&w.documents, 120).unwrap()).unwrap()
}

fn small_encoder(seed: u64) -> DualEncoder {
    DualEncoder::init(EncoderConfig { embed_dim: 6, hidden_dim: 7, out_dim: 5, vocab_hash_buckets: 64, seed }).unwrap()
}

#[test]
fn corpus_parsing() {
    let p = Path::new("c.tsv");
    let docs = parse_documents(p, "a\tText one.\tTitle\r\nb\tText two.\n\n", CorpusFormat::Tsv).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!((docs[0].title.as_str(), docs[1].title.as_str()), ("Title", ""));
    assert_eq!(docs[0].text, "Text one.");

    let jsonl = "{\"id\":\"x\",\"text\":\"Hello.\",\"title\":\"T\"}\n{\"id\":\"y\",\"text\":\"World.\"}\n";
    let docs = parse_documents(p, jsonl, CorpusFormat::Jsonl).unwrap();
    assert_eq!(docs[1].id, "y");

    let err = parse_documents(p, "{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n", CorpusFormat::Jsonl).unwrap_err();
    assert!(matches!(err, CliError::Format { line: Some(2), .. }), "{err}");
    let err = parse_documents(p, "ok\tfine\n\n{not json", CorpusFormat::Jsonl).unwrap_err();
    assert!(matches!(err, CliError::Format { line: Some(1), .. }), "{err}");
    let err = parse_documents(p, "ok\tfine\nbad\ta\tb\tc\n", CorpusFormat::Tsv).unwrap_err();
    assert!(matches!(err, CliError::Format { line: Some(2), .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn passage_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let store = toy_store();
    write_passages(&path, store.passages()).unwrap();
    assert_eq!(read_passages(&path).unwrap().passages(), store.passages());
    let first = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    for key in ["id", "doc_id", "title", "text", "sentence_spans", "word_count"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["sentence_spans"][0].is_array());
}

#[test]
fn qa_validation_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qa.jsonl");
    std::fs::write(&path, "{\"question\":\"a?\",\"answers\":[\"x\"]}\n\n{\"question\":\"b?\",\"answers\":[]}\n").unwrap();
    let err = read_qa(&path).unwrap_err();
    assert!(matches!(err, CliError::Format { line: Some(3), .. }), "{err}");
}

#[test]
fn bm25_snapshot_round_trip() {
    let store = toy_store();
    let index = InvertedIndex::build(store.passages(), Bm25Params { k1: 1.5, b: 0.6 }).unwrap();
    let bytes = encode_bm25(&index);
    let back = decode_bm25(Path::new("i.bin"), &bytes).unwrap();
    assert_eq!(back, index);
    for q in ["who was born in 1850", "prize", "composer corp"] {
        assert_eq!(back.search(q, 50), index.search(q, 50));
    }
    assert!(decode_bm25(Path::new("i.bin"), &bytes[..bytes.len() - 3]).is_err());
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 9;
    let err = decode_bm25(Path::new("i.bin"), &wrong_version).unwrap_err();
    assert!(err.to_string().contains("version 9"), "{err}");
    assert!(decode_checkpoint(Path::new("i.bin"), &bytes).unwrap_err().to_string().contains("magic"));
}

#[test]
fn checkpoint_round_trip_encodes_identically() {
    let model = small_encoder(3);
    let bytes = encode_checkpoint(&model);
    let back = decode_checkpoint(Path::new("m.ckpt"), &bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.fingerprint(), model.fingerprint());
    assert_eq!(back.encode_question("hello world"), model.encode_question("hello world"));

    // flipping a weight byte breaks the stored fingerprint
    let mut corrupt = bytes.clone();
    let at = corrupt.len() - 20;
    corrupt[at] ^= 0x40;
    assert!(decode_checkpoint(Path::new("m.ckpt"), &corrupt).is_err());
}

#[test]
fn dense_snapshot_round_trip_and_warning() {
    let store = toy_store();
    let model = small_encoder(4);
    let index = DenseIndex::build(&model, store.passages()).unwrap();
    let back = decode_dense(Path::new("d.bin"), &encode_dense(&index)).unwrap();
    assert_eq!(back, index);
    let q = model.encode_question("where was greta born");
    assert_eq!(back.search(&q, 10).unwrap(), index.search(&q, 10).unwrap());
    assert!(fingerprint_warning(&back, &model).is_none());
    assert!(fingerprint_warning(&back, &small_encoder(5)).is_some());
}

#[test]
fn synthetic_records_have_the_documented_shape() {
    let store = toy_store();
    let index = InvertedIndex::build(store.passages(), Bm25Params::default()).unwrap();
    let examples = generate_corpus(&store, &index, &GeneratorConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    write_synthetic(&path, &examples).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    // serde_json::Value sorts keys, so check the order on the raw line
    let line = text.lines().next().unwrap();
    let at = |k: &str| line.find(&format!("\"{k}\":")).unwrap_or_else(|| panic!("{k} missing"));
    let order = ["passage_id", "sentence", "answer", "question", "negative_passage_id"].map(at);
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{line}");
    assert!(v["answer"]["text"].is_string() && v["answer"]["span"].is_array());
    let records = read_synthetic(&path).unwrap();
    assert_eq!(records.len(), examples.len());
    for (r, ex) in records.iter().zip(&examples) {
        let p = store.require(&r.passage_id).unwrap();
        assert_eq!(r.answer.span.slice(&p.text), Some(ex.answer.surface.as_str()));
    }
    let pool = synthetic_pool(&records);
    assert_eq!(pool.example_count(), examples.len());
}

#[test]
fn run_round_trip_and_mixed_runs() {
    let store = toy_store();
    let index = InvertedIndex::build(store.passages(), Bm25Params::default()).unwrap();
    let qa = ToyWorld::generate(2, 40, 5, 0).train_qa;
    let run = retro_core::experiments::bm25_run(&index, &qa, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    write_run(&path, &run).unwrap();
    assert_eq!(read_run(&path).unwrap(), run);

    let mut other = run.clone();
    other.system = System::Dpr;
    let mixed = RetrievalRun { results: other.results.clone(), ..other };
    write_run(&dir.path().join("b.jsonl"), &mixed).unwrap();
    let both = format!(
        "{}{}",
        std::fs::read_to_string(&path).unwrap(),
        std::fs::read_to_string(dir.path().join("b.jsonl")).unwrap()
    );
    std::fs::write(&path, both).unwrap();
    assert!(read_run(&path).is_err());
}

#[test]
fn report_json_and_table() {
    let report = retro_core::experiments::AccuracyReport { accuracy: [(1, 0.5), (20, 0.75)].into(), questions: 4 };
    let rows = vec![
        ReportRow::new(System::Bm25, "none", Some(100), Some(1), &report),
        ReportRow::new(System::Augdpr, "pretrain+finetune", Some(100), Some(1), &report),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_report(&path, &rows, None).unwrap();
    assert_eq!(read_report(&path).unwrap(), rows);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v[1]["accuracy"]["20"], 0.75);
    assert_eq!(v[1]["stage"], "pretrain+finetune");
    let table = std::fs::read_to_string(dir.path().join("r.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    // numeric columns line up on their right edge
    assert_eq!(lines[0].find("top-20").map(|i| i + 6), lines[2].rfind("75.0").map(|i| i + 4));
    assert_eq!(lines[2].len(), lines[3].len());
}

#[test]
fn config_defaults_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(
        &path,
        r#"{"generator":{"seed":3},"trainer":{"seed":9,"finetune":{"epochs":2}},
            "paths":{"passages":"p.jsonl","bm25":"/abs/i.bin","train_qa":"qa.jsonl"}}"#,
    )
    .unwrap();
    let c = RunConfig::load(&path).unwrap();
    assert_eq!(c.paths.passages, dir.path().join("p.jsonl"));
    assert_eq!(c.paths.bm25, Path::new("/abs/i.bin"));
    let s = c.matrix_settings();
    assert_eq!((s.pretrain.epochs, s.finetune.epochs), (6, 2));
    assert_eq!(s.encoder.seed, 9);
    assert_eq!(s.generator.sampler.seed, 3);
    assert_eq!((s.generator.sampler.top_p, s.generator.sampler.top_k, s.generator.n_questions), (0.95, 10, 4));
    assert_eq!(c.corpus.max_words, 120);
    assert_eq!(s.ks, vec![1, 5, 20, 100]);

    std::fs::write(&path, r#"{"generator":{"seed":3,"top_p":1.5},"trainer":{"seed":9},"paths":{"passages":"p","bm25":"b","train_qa":"q"}}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupted_snapshots_never_panic(cut in 0usize..400, flip in 0usize..400, byte in any::<u8>()) {
        let model = small_encoder(1);
        let mut bytes = encode_checkpoint(&model);
        if flip < bytes.len() {
            bytes[flip] = byte;
        }
        bytes.truncate(bytes.len().saturating_sub(cut));
        let _ = decode_checkpoint(Path::new("x"), &bytes);
        let _ = decode_bm25(Path::new("x"), &bytes);
        let _ = decode_dense(Path::new("x"), &bytes);
    }
}
