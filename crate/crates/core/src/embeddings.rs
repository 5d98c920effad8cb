//! Sentence-embedding sets and their two file formats.
//!
//! Text format: a header line `{"source_tag": ..., "dim": ...}` followed by one
//! `{"sentence_id": ..., "vector": [...]}` object per line.
//!
//! Binary format (`QEMB`, all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "QEMB"
//! version      u16      1
//! dim          u32
//! count        u64
//! count x {
//!   id_len     u16
//!   id         id_len bytes of UTF-8
//!   vector     dim x f32 (IEEE-754)
//! }
//! ```
//!
//! The binary format carries no source tag; loaders take it from the file stem.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceRecord};
use crate::error::{Error, Result};
use crate::fsutil;

pub const QEMB_MAGIC: &[u8; 4] = b"QEMB";
pub const QEMB_VERSION: u16 = 1;

const MIN_NORM: f64 = 1e-12;

/// Euclidean norm with 64-bit accumulation.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean length.
pub fn normalize(v: &[f32]) -> Result<Vec<f32>> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let norm = l2_norm(v);
    if !(norm >= MIN_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

/// One record of the text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub sentence_id: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextHeader {
    pub source_tag: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

impl EmbeddingFormat {
    /// `.qemb` and `.bin` mean binary; anything else is text.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("qemb") | Some("bin") => EmbeddingFormat::Binary,
            _ => EmbeddingFormat::Text,
        }
    }
}

/// Immutable, validated set of embeddings sharing one dimension.
///
/// Stores the vectors as loaded plus a unit-normalized copy and each original
/// norm. Vectors live in flat row-major buffers.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    source_tag: String,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    raw: Vec<f32>,
    unit: Vec<f32>,
    norms: Vec<f64>,
}

impl EmbeddingSet {
    /// Builds a set from `(sentence_id, vector)` pairs. Errors carry the
    /// 0-based record index.
    pub fn from_vectors<I>(source_tag: impl Into<String>, dim: usize, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        let source_tag = source_tag.into();
        if source_tag.is_empty() {
            return Err(Error::Corrupt("empty source_tag".into()));
        }
        if dim == 0 {
            return Err(Error::Corrupt("dim must be positive".into()));
        }
        let mut set = EmbeddingSet {
            source_tag,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            raw: Vec::new(),
            unit: Vec::new(),
            norms: Vec::new(),
        };
        for (record, (id, vector)) in records.into_iter().enumerate() {
            set.push(record, id, vector)?;
        }
        if set.ids.is_empty() {
            return Err(Error::EmptyEmbeddingSet);
        }
        Ok(set)
    }

    fn push(&mut self, record: usize, id: String, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::RecordDimMismatch {
                record,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if id.is_empty() {
            return Err(Error::InvalidRecord {
                record,
                source: Box::new(Error::Corrupt("empty sentence_id".into())),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let unit = normalize(&vector).map_err(|e| Error::InvalidRecord {
            record,
            source: Box::new(e),
        })?;
        self.norms.push(l2_norm(&vector));
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.raw.extend_from_slice(&vector);
        self.unit.extend_from_slice(&unit);
        Ok(())
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Unit vector at row `i`.
    pub fn unit(&self, i: usize) -> &[f32] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector at row `i` exactly as loaded.
    pub fn raw(&self, i: usize) -> &[f32] {
        &self.raw[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn unit_by_id(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.unit(i))
    }

    /// Iterates `(id, unit vector)` in load order.
    pub fn iter_unit(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.unit.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    pub fn record(&self, i: usize) -> EmbeddingRecord {
        EmbeddingRecord {
            sentence_id: self.ids[i].clone(),
            vector: self.raw(i).to_vec(),
        }
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Result<Self> {
        let tag = tag.into();
        if tag.is_empty() {
            return Err(Error::Corrupt("empty source_tag".into()));
        }
        self.source_tag = tag;
        Ok(self)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        let header = TextHeader {
            source_tag: self.source_tag.clone(),
            dim: self.dim,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(io)?;
        for i in 0..self.len() {
            serde_json::to_writer(&mut out, &self.record(i))?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        let dim = u32::try_from(self.dim).map_err(|_| Error::Corrupt("dim exceeds u32".into()))?;
        out.write_all(QEMB_MAGIC).map_err(io)?;
        out.write_all(&QEMB_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&dim.to_le_bytes()).map_err(io)?;
        out.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        for i in 0..self.len() {
            let id = self.ids[i].as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| Error::Corrupt(format!("id {:?} longer than 65535 bytes", self.ids[i])))?;
            out.write_all(&id_len.to_le_bytes()).map_err(io)?;
            out.write_all(id).map_err(io)?;
            for x in self.raw(i) {
                out.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self, format: EmbeddingFormat) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match format {
            EmbeddingFormat::Text => self.write_text(&mut buf)?,
            EmbeddingFormat::Binary => self.write_binary(&mut buf)?,
        }
        Ok(buf)
    }
}

/// Parses the text format.
pub fn read_text<R: BufRead>(reader: R) -> Result<EmbeddingSet> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
    let malformed = |line: usize, reason: String| Error::Malformed { line, reason };

    let Some((line_no, header)) = lines.next() else {
        return Err(Error::EmptyEmbeddingSet);
    };
    let header = header.map_err(|e| malformed(line_no, e.to_string()))?;
    let header: TextHeader =
        serde_json::from_str(&header).map_err(|e| malformed(line_no, format!("header: {e}")))?;

    let mut records = Vec::new();
    for (line_no, line) in lines {
        let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        records.push((record.sentence_id, record.vector));
    }
    EmbeddingSet::from_vectors(header.source_tag, header.dim, records)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Corrupt(format!("truncated while reading {what}"))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses the binary format.
pub fn read_binary(bytes: &[u8], source_tag: &str) -> Result<EmbeddingSet> {
    if bytes.is_empty() {
        return Err(Error::EmptyEmbeddingSet);
    }
    let mut cur = ByteCursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != QEMB_MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = cur.u16("version")?;
    if version != QEMB_VERSION {
        return Err(Error::Corrupt(format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")? as usize;
    let count = cur.u64("count")?;
    if count == 0 {
        return Err(Error::EmptyEmbeddingSet);
    }
    // each record needs at least 2 + 4*dim bytes
    let min_record = 2 + 4 * dim as u64;
    if count.saturating_mul(min_record) > (bytes.len() - cur.pos) as u64 {
        return Err(Error::Corrupt(format!(
            "header claims {count} records but file is too short"
        )));
    }
    let mut records = Vec::with_capacity(count as usize);
    for record in 0..count as usize {
        let what = format!("record {record}");
        let id_len = cur.u16(&what)? as usize;
        let id = std::str::from_utf8(cur.take(id_len, &what)?)
            .map_err(|_| Error::Corrupt(format!("record {record}: id is not UTF-8")))?
            .to_string();
        let vector = cur
            .take(4 * dim, &what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push((id, vector));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after last record",
            bytes.len() - cur.pos
        )));
    }
    EmbeddingSet::from_vectors(source_tag, dim, records)
}

/// Loads either format, detected by the `QEMB` magic.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&bytes, &tag_from_path(path))
}

/// `fallback_tag` is used only for the binary format.
pub fn parse_embeddings(bytes: &[u8], fallback_tag: &str) -> Result<EmbeddingSet> {
    if bytes.starts_with(QEMB_MAGIC) {
        read_binary(bytes, fallback_tag)
    } else {
        read_text(bytes)
    }
}

fn tag_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("embeddings")
        .to_string()
}

pub fn save_embeddings(set: &EmbeddingSet, path: &Path, format: EmbeddingFormat) -> Result<()> {
    fsutil::write_atomic(path, &set.to_bytes(format)?)
}

/// Corpus records joined with their embeddings.
///
/// Rows follow corpus order. Ids present on only one side are listed, never dropped silently.
#[derive(Debug, Clone)]
pub struct AlignedView<'a> {
    corpus: &'a Corpus,
    set: &'a EmbeddingSet,
    rows: Vec<(usize, usize)>,
    corpus_only: Vec<String>,
    embedding_only: Vec<String>,
}

pub fn align<'a>(corpus: &'a Corpus, set: &'a EmbeddingSet) -> Result<AlignedView<'a>> {
    let mut rows = Vec::new();
    let mut corpus_only = Vec::new();
    for (ci, record) in corpus.records().iter().enumerate() {
        match set.position(&record.id) {
            Some(si) => rows.push((ci, si)),
            None => corpus_only.push(record.id.clone()),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let embedding_only = set
        .ids()
        .iter()
        .filter(|id| !corpus.contains(id))
        .cloned()
        .collect();
    Ok(AlignedView {
        corpus,
        set,
        rows,
        corpus_only,
        embedding_only,
    })
}

impl<'a> AlignedView<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn source_tag(&self) -> &str {
        self.set.source_tag()
    }

    pub fn corpus_only(&self) -> &[String] {
        &self.corpus_only
    }

    pub fn embedding_only(&self) -> &[String] {
        &self.embedding_only
    }

    pub fn get(&self, row: usize) -> (&'a SentenceRecord, &'a [f32]) {
        let (ci, si) = self.rows[row];
        (&self.corpus.records()[ci], self.set.unit(si))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a SentenceRecord, &'a [f32])> + '_ {
        (0..self.rows.len()).map(move |r| self.get(r))
    }

    /// Drops rows whose id is in `ids`.
    pub fn excluding(mut self, ids: &HashSet<&str>) -> Self {
        let corpus = self.corpus;
        self.rows
            .retain(|&(ci, _)| !ids.contains(corpus.records()[ci].id.as_str()));
        self
    }
}
