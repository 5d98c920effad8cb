use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use qmatch_core::corpus::{Corpus, CorpusStore};
use qmatch_core::embeddings::{read_binary, EmbeddingFormat, EmbeddingSet};
use qmatch_core::fsutil::{validate_name, write_atomic};
use qmatch_core::matcher::{MatchResult, StrategyRegistry};
use qmatch_core::registry::{RegistryStore, TopicRegistry};
use qmatch_core::Result as CoreResult;

use crate::error::{ApiError, ApiResult};
use crate::{ensure_writable, ServiceConfig, StartError};

/// Cheap to clone; shared by every handler.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

pub struct Inner {
    pub(crate) corpora: CorpusStore,
    pub(crate) embeddings_dir: PathBuf,
    pub(crate) registry_store: RegistryStore,
    snapshot: RwLock<Arc<TopicRegistry>>,
    /// Serializes registry mutations within this process.
    pub(crate) write: tokio::sync::Mutex<()>,
    pub(crate) pair_cap: Option<usize>,
    pub(crate) sync_limit: usize,
    pub(crate) strategies: StrategyRegistry,
    corpus_cache: RwLock<HashMap<String, Corpus>>,
    embedding_cache: RwLock<HashMap<String, Arc<EmbeddingSet>>>,
    jobs: Mutex<HashMap<u64, JobState>>,
    next_job: AtomicU64,
}

/// A completed ranking, kept so pages can be served without rescoring.
#[derive(Debug)]
pub(crate) struct MatchRun {
    pub topic: String,
    pub topic_version: u64,
    pub registry_version: u64,
    pub config_tag: String,
    pub source_tag: String,
    pub corpus: Corpus,
    pub exemplars: Vec<(String, String)>,
    pub results: Vec<MatchResult>,
}

#[derive(Debug, Clone)]
pub(crate) enum JobState {
    Running,
    Done(Arc<MatchRun>),
    Failed { kind: String, message: String },
}

impl std::ops::Deref for AppState {
    type Target = Inner;

    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<Self, StartError> {
        let corpora_dir = config.data_dir.join("corpora");
        let embeddings_dir = config.data_dir.join("embeddings");
        for dir in [&config.data_dir, &corpora_dir, &embeddings_dir] {
            ensure_writable(dir)?;
        }
        let registry_store = RegistryStore::in_dir(&config.data_dir);
        let registry = registry_store.load().map_err(StartError::Registry)?;
        Ok(AppState(Arc::new(Inner {
            corpora: CorpusStore::new(corpora_dir),
            embeddings_dir,
            registry_store,
            snapshot: RwLock::new(Arc::new(registry)),
            write: tokio::sync::Mutex::new(()),
            pair_cap: config.pair_cap,
            sync_limit: config.sync_limit,
            strategies: StrategyRegistry::builtin(),
            corpus_cache: RwLock::default(),
            embedding_cache: RwLock::default(),
            jobs: Mutex::default(),
            next_job: AtomicU64::new(1),
        })))
    }
}

impl Inner {
    pub fn registry(&self) -> Arc<TopicRegistry> {
        self.snapshot.read().expect("registry lock").clone()
    }

    /// Applies `f` to the on-disk registry and publishes the result. Callers
    /// must hold `write`.
    pub(crate) fn mutate<T>(&self, f: impl FnOnce(&mut TopicRegistry) -> CoreResult<T>) -> ApiResult<T> {
        let mut next = None;
        let out = self.registry_store.update(|reg| {
            let out = f(reg)?;
            next = Some(reg.clone());
            Ok(out)
        })?;
        if let Some(reg) = next {
            *self.snapshot.write().expect("registry lock") = Arc::new(reg);
        }
        Ok(out)
    }

    pub(crate) fn corpus(&self, id: &str) -> ApiResult<Corpus> {
        validate_name(id)?;
        if let Some(c) = self.corpus_cache.read().expect("cache lock").get(id) {
            return Ok(c.clone());
        }
        if !self.corpora.exists(id) {
            return Err(ApiError::not_found("unknown_corpus", format!("no corpus {id:?}")));
        }
        let corpus = self.corpora.load(id)?;
        self.corpus_cache
            .write()
            .expect("cache lock")
            .insert(id.to_string(), corpus.clone());
        Ok(corpus)
    }

    pub(crate) fn store_corpus(&self, corpus: &Corpus) -> ApiResult<()> {
        self.corpora.save(corpus)?;
        self.corpus_cache
            .write()
            .expect("cache lock")
            .insert(corpus.id().to_string(), corpus.clone());
        Ok(())
    }

    pub(crate) fn embeddings_path(&self, tag: &str) -> PathBuf {
        self.embeddings_dir.join(format!("{tag}.qemb"))
    }

    pub(crate) fn embeddings(&self, tag: &str) -> ApiResult<Arc<EmbeddingSet>> {
        validate_name(tag)?;
        if let Some(s) = self.embedding_cache.read().expect("cache lock").get(tag) {
            return Ok(s.clone());
        }
        let path = self.embeddings_path(tag);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::not_found(
                    "unknown_embeddings",
                    format!("no embedding set {tag:?}"),
                ))
            }
            Err(e) => return Err(ApiError::Internal(format!("{}: {e}", path.display()))),
        };
        let set = Arc::new(read_binary(&bytes, tag)?);
        self.embedding_cache
            .write()
            .expect("cache lock")
            .insert(tag.to_string(), set.clone());
        Ok(set)
    }

    pub(crate) fn store_embeddings(&self, set: EmbeddingSet) -> ApiResult<Arc<EmbeddingSet>> {
        validate_name(set.source_tag())?;
        let path = self.embeddings_path(set.source_tag());
        write_atomic(&path, &set.to_bytes(EmbeddingFormat::Binary)?)?;
        let set = Arc::new(set);
        self.embedding_cache
            .write()
            .expect("cache lock")
            .insert(set.source_tag().to_string(), set.clone());
        Ok(set)
    }

    pub(crate) fn embedding_tags(&self) -> ApiResult<Vec<String>> {
        let mut tags = Vec::new();
        let entries = std::fs::read_dir(&self.embeddings_dir)
            .map_err(|e| ApiError::Internal(format!("{}: {e}", self.embeddings_dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "qemb") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    tags.push(stem.to_string());
                }
            }
        }
        tags.sort();
        Ok(tags)
    }

    pub(crate) fn new_job(&self) -> u64 {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        self.jobs.lock().expect("jobs lock").insert(id, JobState::Running);
        id
    }

    pub(crate) fn finish_job(&self, id: u64, state: JobState) {
        self.jobs.lock().expect("jobs lock").insert(id, state);
    }

    pub(crate) fn job(&self, id: u64) -> Option<JobState> {
        self.jobs.lock().expect("jobs lock").get(&id).cloned()
    }
}
