//! Versioned little-endian snapshots: BM25 index, encoder checkpoint and
//! dense index.
//!
//! Each file starts with an 8-byte magic and a `u32` version. Strings and
//! arrays are prefixed with a `u64` length.

use std::collections::BTreeMap;
use std::path::Path;

use retro_core::dense::DenseIndex;
use retro_core::encoder::{DualEncoder, EncoderConfig, Tower};
use retro_core::lexical::{Bm25Params, InvertedIndex, Posting};
use retro_core::linalg::Matrix;

use crate::error::{CliError, CliResult};
use crate::fsio::{read_bytes, write_bytes};

pub const BM25_MAGIC: [u8; 8] = *b"RETROB25";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RETROCKP";
pub const DENSE_MAGIC: [u8; 8] = *b"RETRODNS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: [u8; 8]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(FORMAT_VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.len(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, bytes: &'a [u8], magic: [u8; 8], what: &str) -> CliResult<Self> {
        let mut r = Reader { path, bytes, pos: 0 };
        if r.take(8)? != magic {
            return Err(r.err(format!("not a {what} file (bad magic)")));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.err(format!("unsupported {what} version {version} (expected {FORMAT_VERSION})")));
        }
        Ok(r)
    }

    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::format(self.path, None, message)
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.err(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A length prefix, bounded by what the remaining bytes could hold.
    fn len(&mut self, elem_size: usize) -> CliResult<usize> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.saturating_mul(elem_size.max(1) as u64) > remaining {
            return Err(self.err(format!("length {n} exceeds file size")));
        }
        Ok(n as usize)
    }

    fn str(&mut self) -> CliResult<String> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.err("invalid UTF-8 string"))
    }

    fn f64s(&mut self) -> CliResult<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn finish(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn core_err(path: &Path, e: retro_core::Error) -> CliError {
    CliError::core(path.display().to_string(), e)
}

pub fn encode_bm25(index: &InvertedIndex) -> Vec<u8> {
    let mut w = Writer::header(BM25_MAGIC);
    let params = index.params();
    w.f64(params.k1);
    w.f64(params.b);
    w.len(index.len());
    for (id, &len) in index.passage_ids().iter().zip(index.doc_lengths()) {
        w.str(id);
        w.u32(len);
    }
    w.len(index.postings().len());
    for (term, list) in index.postings() {
        w.str(term);
        w.len(list.len());
        for p in list {
            w.u32(p.ordinal);
            w.u32(p.tf);
        }
    }
    w.0
}

pub fn decode_bm25(path: &Path, bytes: &[u8]) -> CliResult<InvertedIndex> {
    let mut r = Reader::open(path, bytes, BM25_MAGIC, "BM25 index")?;
    let params = Bm25Params { k1: r.f64()?, b: r.f64()? };
    let n = r.len(12)?;
    let mut ids = Vec::with_capacity(n);
    let mut lengths = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(r.str()?);
        lengths.push(r.u32()?);
    }
    let terms = r.len(16)?;
    let mut postings = BTreeMap::new();
    for _ in 0..terms {
        let term = r.str()?;
        let m = r.len(8)?;
        let list = (0..m).map(|_| Ok(Posting { ordinal: r.u32()?, tf: r.u32()? })).collect::<CliResult<Vec<_>>>()?;
        postings.insert(term, list);
    }
    r.finish()?;
    InvertedIndex::from_parts(postings, lengths, ids, params).map_err(|e| core_err(path, e))
}

pub fn save_bm25(path: &Path, index: &InvertedIndex) -> CliResult<()> {
    write_bytes(path, &encode_bm25(index))
}

pub fn load_bm25(path: &Path) -> CliResult<InvertedIndex> {
    decode_bm25(path, &read_bytes(path)?)
}

pub fn encode_checkpoint(model: &DualEncoder) -> Vec<u8> {
    let mut w = Writer::header(CHECKPOINT_MAGIC);
    let c = &model.config;
    for v in [c.embed_dim, c.hidden_dim, c.out_dim, c.vocab_hash_buckets] {
        w.len(v);
    }
    w.u64(c.seed);
    for tower in [Tower::Question, Tower::Passage] {
        for t in model.tower(tower).tensors() {
            w.f64s(t);
        }
    }
    w.u64(model.fingerprint());
    w.0
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> CliResult<DualEncoder> {
    let mut r = Reader::open(path, bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u64()? as usize;
    }
    let config = EncoderConfig {
        embed_dim: dims[0],
        hidden_dim: dims[1],
        out_dim: dims[2],
        vocab_hash_buckets: dims[3],
        seed: r.u64()?,
    };
    config.validate().map_err(|e| core_err(path, e))?;
    // tensors are read and checked against the header before the model is
    // allocated, so a corrupt header cannot request an enormous zero matrix
    let mut tensors = Vec::with_capacity(10);
    for _ in 0..10 {
        tensors.push(r.f64s()?);
    }
    let stored = r.u64()?;
    r.finish()?;
    let (e, h, o, b) = (config.embed_dim, config.hidden_dim, config.out_dim, config.vocab_hash_buckets);
    let expected = [b.checked_mul(e), h.checked_mul(e), Some(h), o.checked_mul(h), Some(o)];
    for (i, data) in tensors.iter().enumerate() {
        if expected[i % 5] != Some(data.len()) {
            let name = retro_core::encoder::TENSOR_NAMES[i % 5];
            return Err(r.err(format!("{name}: {} values do not match the stored shape", data.len())));
        }
    }
    let mut model = DualEncoder::zeros(config);
    let mut it = tensors.into_iter();
    for tower in [Tower::Question, Tower::Passage] {
        for (slot, name) in model.tower_mut(tower).tensors_mut().into_iter().zip(retro_core::encoder::TENSOR_NAMES) {
            let data = it.next().expect("ten tensors");
            debug_assert_eq!(data.len(), slot.len(), "{name}");
            slot.copy_from_slice(&data);
        }
    }
    model.validate().map_err(|e| core_err(path, e))?;
    if model.fingerprint() != stored {
        return Err(r.err("fingerprint does not match stored weights"));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &DualEncoder) -> CliResult<()> {
    write_bytes(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> CliResult<DualEncoder> {
    decode_checkpoint(path, &read_bytes(path)?)
}

pub fn encode_dense(index: &DenseIndex) -> Vec<u8> {
    let mut w = Writer::header(DENSE_MAGIC);
    w.u64(index.encoder_fingerprint());
    w.len(index.dim());
    w.len(index.len());
    for id in index.passage_ids() {
        w.str(id);
    }
    w.f64s(index.vectors().as_slice());
    w.0
}

pub fn decode_dense(path: &Path, bytes: &[u8]) -> CliResult<DenseIndex> {
    let mut r = Reader::open(path, bytes, DENSE_MAGIC, "dense index")?;
    let fingerprint = r.u64()?;
    let dim = r.u64()? as usize;
    let n = r.len(8)?;
    let ids = (0..n).map(|_| r.str()).collect::<CliResult<Vec<_>>>()?;
    let data = r.f64s()?;
    r.finish()?;
    if data.len() != n.saturating_mul(dim) {
        return Err(r.err(format!("expected {n}x{dim} values, found {}", data.len())));
    }
    let vectors = Matrix::from_vec(n, dim, data).map_err(|e| core_err(path, e))?;
    DenseIndex::from_parts(vectors, ids, fingerprint).map_err(|e| core_err(path, e))
}

pub fn save_dense(path: &Path, index: &DenseIndex) -> CliResult<()> {
    write_bytes(path, &encode_dense(index))
}

pub fn load_dense(path: &Path) -> CliResult<DenseIndex> {
    decode_dense(path, &read_bytes(path)?)
}

/// Warning text when `index` was not built by `encoder`.
pub fn fingerprint_warning(index: &DenseIndex, encoder: &DualEncoder) -> Option<String> {
    let (have, want) = (index.encoder_fingerprint(), encoder.fingerprint());
    (have != want).then(|| {
        format!("dense index was built by encoder {have:016x} but the checkpoint is {want:016x}; results may be meaningless")
    })
}
