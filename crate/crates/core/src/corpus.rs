//! Question corpora: ingest, persistence, seeded sampling and surface statistics.
//!
//! The on-disk and wire format is newline-delimited JSON, one [`SentenceRecord`]
//! per line. Blank lines are ignored.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{self, WriteLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerSide {
    Customer,
    Agent,
    Unknown,
}

/// One extracted question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_side: Option<SpeakerSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl SentenceRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        SentenceRecord {
            id: id.into(),
            text: text.into(),
            source_call_id: None,
            speaker_side: None,
            timestamp: None,
        }
    }
}

/// Immutable snapshot of a validated corpus. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct Corpus {
    id: String,
    records: Arc<[SentenceRecord]>,
    index: Arc<HashMap<String, usize>>,
}

impl Corpus {
    /// Validates ids (non-empty, unique) and texts (non-empty after trimming).
    pub fn from_records(id: impl Into<String>, records: Vec<SentenceRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (position, record) in records.iter().enumerate() {
            if record.id.is_empty() {
                return Err(Error::Malformed {
                    line: position + 1,
                    reason: "empty id".into(),
                });
            }
            if record.text.trim().is_empty() {
                return Err(Error::EmptyText { position });
            }
            if index.insert(record.id.clone(), position).is_some() {
                return Err(Error::DuplicateId(record.id.clone()));
            }
        }
        Ok(Corpus {
            id: id.into(),
            records: records.into(),
            index: Arc::new(index),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SentenceRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&SentenceRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Serializes the corpus in the ingest format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for record in self.records.iter() {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}

/// Parses newline-delimited records. Line numbers in errors are 1-based;
/// `position` in [`Error::EmptyText`] is the 0-based record index.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<SentenceRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads and validates a record stream into an in-memory corpus.
pub fn ingest_sentences<R: BufRead>(source: R, corpus_id: &str) -> Result<Corpus> {
    Corpus::from_records(corpus_id, read_records(source)?)
}

/// Corpora persisted as `<root>/<corpus_id>.jsonl`.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    root: PathBuf,
}

impl CorpusStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CorpusStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, corpus_id: &str) -> PathBuf {
        self.root.join(format!("{corpus_id}.jsonl"))
    }

    /// Ingests and persists a corpus. Holds an exclusive lock on the id for
    /// the duration; the file is replaced atomically.
    pub fn ingest<R: BufRead>(&self, corpus_id: &str, source: R) -> Result<Corpus> {
        fsutil::validate_name(corpus_id)?;
        let corpus = ingest_sentences(source, corpus_id)?;
        self.save(&corpus)?;
        Ok(corpus)
    }

    pub fn save(&self, corpus: &Corpus) -> Result<()> {
        fsutil::validate_name(corpus.id())?;
        let path = self.path(corpus.id());
        let _lock = WriteLock::acquire(&path)?;
        let mut buf = Vec::new();
        corpus.write_to(&mut buf)?;
        fsutil::write_atomic(&path, &buf)
    }

    pub fn load(&self, corpus_id: &str) -> Result<Corpus> {
        fsutil::validate_name(corpus_id)?;
        let path = self.path(corpus_id);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        ingest_sentences(BufReader::new(file), corpus_id)
    }

    pub fn exists(&self, corpus_id: &str) -> bool {
        self.path(corpus_id).is_file()
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let entries = match fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.root, e)),
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// Uniform sample of `n` records without replacement.
///
/// Ids are sorted before a seeded partial Fisher-Yates shuffle, so the result
/// depends only on the id set, `n` and `seed`. The sample keeps the records'
/// original relative order.
pub fn sample(corpus: &Corpus, n: usize, seed: u64, new_id: &str) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be positive".into()));
    }
    if n > corpus.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut ids: Vec<&str> = corpus.ids().collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = ids.len() as u64;
    for i in 0..n {
        let j = rng.random_range(i as u64..len) as usize;
        ids.swap(i, j);
    }
    let chosen: HashSet<&str> = ids[..n].iter().copied().collect();
    let records = corpus
        .records()
        .iter()
        .filter(|r| chosen.contains(r.id.as_str()))
        .cloned()
        .collect();
    Corpus::from_records(new_id, records)
}

/// Lowercases, splits on whitespace, strips leading/trailing punctuation from
/// each chunk, and drops chunks that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|chunk| chunk.trim_matches(is_punctuation).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{2013}'
                | '\u{2014}' | '\u{00BF}' | '\u{00A1}' | '\u{00AB}' | '\u{00BB}'
        )
}

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en_v1.txt");

/// Version tag of the bundled list; bump when the data file changes.
pub const BUNDLED_STOPWORDS_VERSION: &str = "en-v1";

#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// The bundled English list.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS).expect("bundled stop-word list is non-empty")
    }

    /// One word per line; `#` comments and blank lines are skipped. Words are lowercased.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_words(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        if words.is_empty() {
            return Err(Error::EmptyStopwords);
        }
        Ok(StopWords { words })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub avg_token_length: f64,
    pub median_token_length: f64,
    pub stopword_fraction: f64,
    /// Numerator and denominator of `stopword_fraction`.
    pub stopword_tokens: u64,
    pub total_tokens: u64,
}

pub fn corpus_stats(corpus: &Corpus, stopwords: &StopWords) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if stopwords.is_empty() {
        return Err(Error::EmptyStopwords);
    }
    let mut lengths = Vec::with_capacity(corpus.len());
    let mut stop = 0u64;
    for record in corpus.records() {
        let tokens = tokenize(&record.text);
        stop += tokens.iter().filter(|t| stopwords.contains(t)).count() as u64;
        lengths.push(tokens.len() as u64);
    }
    let total: u64 = lengths.iter().sum();
    lengths.sort_unstable();
    // lower-middle element for even counts
    let median = lengths[(lengths.len() - 1) / 2];
    Ok(CorpusStats {
        count: corpus.len(),
        avg_token_length: total as f64 / corpus.len() as f64,
        median_token_length: median as f64,
        stopword_fraction: if total == 0 {
            0.0
        } else {
            stop as f64 / total as f64
        },
        stopword_tokens: stop,
        total_tokens: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Corpus {
        let records = texts
            .iter()
            .enumerate()
            .map(|(i, t)| SentenceRecord::new(format!("q{i}"), *t))
            .collect();
        Corpus::from_records("c", records).unwrap()
    }

    #[test]
    fn ingest_counts_records() {
        let input = r#"{"id":"a","text":"How much is it?"}
{"id":"b","text":"Can I get your name?","speaker_side":"customer"}

{"id":"c","text":"What's the lowest price?","source_call_id":"call-7","timestamp":"2021-03-01T10:00:00Z"}
"#;
        let c = ingest_sentences(input.as_bytes(), "x").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get("b").unwrap().speaker_side, Some(SpeakerSide::Customer));
    }

    #[test]
    fn ingest_rejects_duplicate_id() {
        let input = "{\"id\":\"q1\",\"text\":\"a\"}\n{\"id\":\"q1\",\"text\":\"b\"}\n";
        match ingest_sentences(input.as_bytes(), "x") {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "q1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_empty_text_with_position() {
        let input = "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\",\"text\":\"   \"}\n";
        assert!(matches!(
            ingest_sentences(input.as_bytes(), "x"),
            Err(Error::EmptyText { position: 1 })
        ));
    }

    #[test]
    fn ingest_reports_malformed_line_number() {
        let input = "{\"id\":\"a\",\"text\":\"ok\"}\n\n{\"id\":\"b\" \"text\"}\n";
        assert!(matches!(
            ingest_sentences(input.as_bytes(), "x"),
            Err(Error::Malformed { line: 3, .. })
        ));
        let bad_side = "{\"id\":\"a\",\"text\":\"ok\",\"speaker_side\":\"robot\"}\n";
        assert!(matches!(
            ingest_sentences(bad_side.as_bytes(), "x"),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn tokenizer_strips_edge_punctuation_only() {
        assert_eq!(
            tokenize("  What's the PRICE?  (monthly) -- ok"),
            vec!["what's", "the", "price", "monthly", "ok"]
        );
        assert!(tokenize("?! ...").is_empty());
        assert_eq!(tokenize("\u{201C}Hi\u{201D}"), vec!["hi"]);
    }

    #[test]
    fn stats_all_stopwords() {
        let sw = StopWords::from_words(["how", "much", "is", "it"]).unwrap();
        let s = corpus_stats(&corpus(&["how much is it"]), &sw).unwrap();
        assert_eq!(s.count, 1);
        assert_eq!(s.avg_token_length, 4.0);
        assert_eq!(s.median_token_length, 4.0);
        assert_eq!(s.stopword_fraction, 1.0);
    }

    #[test]
    fn stats_hand_counted() {
        // lengths 2 and 4; stop tokens "a" twice out of 6
        let sw = StopWords::from_words(["a"]).unwrap();
        let s = corpus_stats(&corpus(&["a b", "a b c d"]), &sw).unwrap();
        assert_eq!(s.avg_token_length, 3.0);
        assert_eq!(s.median_token_length, 2.0);
        assert_eq!((s.stopword_tokens, s.total_tokens), (2, 6));
        assert_eq!(s.stopword_fraction, 2.0 / 6.0);
    }

    #[test]
    fn stats_errors() {
        let empty = Corpus::from_records("e", vec![]).unwrap();
        assert!(matches!(
            corpus_stats(&empty, &StopWords::bundled()),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            StopWords::from_words(Vec::<String>::new()),
            Err(Error::EmptyStopwords)
        ));
    }

    #[test]
    fn bundled_list_loads() {
        let sw = StopWords::bundled();
        assert_eq!(sw.len(), 179);
        assert!(sw.contains("how") && sw.contains("is") && !sw.contains("price"));
    }

    #[test]
    fn sample_everything_keeps_id_set() {
        let texts: Vec<String> = (0..1000).map(|i| format!("question {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = corpus(&refs);
        let s = sample(&c, 1000, 9, "s").unwrap();
        let a: HashSet<&str> = c.ids().collect();
        let b: HashSet<&str> = s.ids().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_is_deterministic_and_order_independent() {
        let texts: Vec<String> = (0..1000).map(|i| format!("question {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = corpus(&refs);
        let mut reversed: Vec<SentenceRecord> = c.records().to_vec();
        reversed.reverse();
        let r = Corpus::from_records("r", reversed).unwrap();

        let ids = |c: &Corpus| c.ids().map(str::to_string).collect::<HashSet<_>>();
        let s1 = sample(&c, 100, 42, "s").unwrap();
        let s2 = sample(&c, 100, 42, "s").unwrap();
        let s3 = sample(&r, 100, 42, "s").unwrap();
        assert_eq!(s1.len(), 100);
        assert_eq!(ids(&s1), ids(&s2));
        assert_eq!(ids(&s1), ids(&s3));

        let distinct = (0..10u64).any(|k| {
            ids(&sample(&c, 100, 2 * k, "s").unwrap())
                != ids(&sample(&c, 100, 2 * k + 1, "s").unwrap())
        });
        assert!(distinct);
    }

    #[test]
    fn sample_too_large() {
        let texts: Vec<String> = (0..50).map(|i| format!("q {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        assert!(matches!(
            sample(&corpus(&refs), 100, 1, "s"),
            Err(Error::SampleTooLarge {
                requested: 100,
                available: 50
            })
        ));
    }

    #[test]
    fn store_round_trip_and_lock() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::new(dir.path());
        let input = "{\"id\":\"a\",\"text\":\"Wie viel kostet das? \u{00e9}\"}\n{\"id\":\"b\",\"text\":\"  spaced  \"}\n";
        let c = store.ingest("demo", input.as_bytes()).unwrap();
        let back = store.load("demo").unwrap();
        assert_eq!(c.records(), back.records());
        assert_eq!(store.list().unwrap(), vec!["demo".to_string()]);

        let _held = WriteLock::acquire(&store.path("demo")).unwrap();
        assert!(matches!(
            store.ingest("demo", input.as_bytes()),
            Err(Error::Locked(_))
        ));
        assert!(matches!(
            store.ingest("../evil", input.as_bytes()),
            Err(Error::InvalidName(_))
        ));
    }
}
