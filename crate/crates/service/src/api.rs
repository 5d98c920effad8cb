use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qmatch_core::corpus::{corpus_stats, ingest_sentences, SentenceRecord, SpeakerSide, StopWords};
use qmatch_core::diagnostics::{distribution, heatmap, DEFAULT_BINS};
use qmatch_core::embeddings::{align, parse_embeddings, EmbeddingFormat, EmbeddingSet};
use qmatch_core::evaluator::{eval_report, render_table, EvalLabel, LabelSet, Ranking};
use qmatch_core::matcher::{
    calibrate_threshold, rank, ranking_tag, topic_from_set, MatchResult, RankOptions, ScoringConfig, DEFAULT_W,
    UNWEIGHTED, WEIGHTED,
};
use qmatch_core::registry::TopicEntry;
use qmatch_core::simcore::{pairwise_pool, pairwise_pool_of, PairwisePool};

use crate::error::{ApiError, ApiResult};
use crate::state::{AppState, JobState, MatchRun};
use crate::DEFAULT_PAGE_SIZE;

const MAX_PAGE_SIZE: usize = 10_000;
const DEFAULT_SEED: u64 = 42;
const DEFAULT_PERCENTILE: f64 = 90.0;

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/health", get(health))
        .route("/corpora", post(post_corpus).get(list_corpora))
        .route("/corpora/{id}", get(get_corpus))
        .route("/corpora/{id}/stats", get(corpus_stats_handler))
        .route("/embeddings", post(post_embeddings).get(list_embeddings))
        .route("/embeddings/{tag}", get(get_embeddings))
        .route("/topics", post(post_topic).get(list_topics))
        .route("/topics/{name}", get(get_topic).delete(delete_topic))
        .route("/topics/{name}/exemplars", put(put_exemplars))
        .route("/topics/{name}/config", put(put_config))
        .route("/topics/{name}/calibrate", post(calibrate))
        .route("/topics/{name}/matches", get(matches))
        .route("/jobs/{id}", get(get_job))
        .route("/diagnostics/distribution", get(diag_distribution))
        .route("/diagnostics/heatmap", get(diag_heatmap))
        .route("/eval", post(post_eval))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

// Bodies are parsed by hand so malformed JSON gets the same error shape as everything else.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

fn parse_optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

// ---- corpora ----

#[derive(Deserialize)]
struct CorpusParams {
    id: String,
    #[serde(default)]
    overwrite: bool,
}

async fn post_corpus(
    State(s): State<AppState>,
    Query(p): Query<CorpusParams>,
    body: Bytes,
) -> ApiResult<Response> {
    qmatch_core::fsutil::validate_name(&p.id)?;
    let corpus = ingest_sentences(&body[..], &p.id)?;
    let _guard = s.write.lock().await;
    if s.corpora.exists(&p.id) && !p.overwrite {
        return Err(ApiError::Conflict {
            kind: "corpus_exists",
            message: format!("corpus {:?} already exists", p.id),
        });
    }
    s.store_corpus(&corpus)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": corpus.id(), "count": corpus.len() })),
    )
        .into_response())
}

async fn list_corpora(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({ "corpora": s.corpora.list()? })))
}

async fn get_corpus(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let corpus = s.corpus(&id)?;
    let mut out = Vec::new();
    corpus.write_to(&mut out)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

async fn corpus_stats_handler(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let corpus = s.corpus(&id)?;
    let stats = blocking(move || Ok(corpus_stats(&corpus, &StopWords::bundled())?)).await?;
    Ok(Json(json!({
        "corpus": id,
        "stopwords": qmatch_core::corpus::BUNDLED_STOPWORDS_VERSION,
        "stats": stats,
    })))
}

// ---- embeddings ----

#[derive(Deserialize)]
struct EmbeddingParams {
    tag: Option<String>,
}

async fn post_embeddings(
    State(s): State<AppState>,
    Query(p): Query<EmbeddingParams>,
    body: Bytes,
) -> ApiResult<Response> {
    let binary = body.starts_with(qmatch_core::embeddings::QEMB_MAGIC);
    let set = match (&p.tag, binary) {
        (None, true) => {
            return Err(ApiError::BadRequest(
                "binary uploads need a ?tag= (the format carries no source tag)".into(),
            ))
        }
        (Some(tag), _) => parse_embeddings(&body, tag)?.with_source_tag(tag.clone())?,
        (None, false) => parse_embeddings(&body, "")?,
    };
    let _guard = s.write.lock().await;
    let set = s.store_embeddings(set)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "source_tag": set.source_tag(), "dim": set.dim(), "count": set.len() })),
    )
        .into_response())
}

async fn list_embeddings(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({ "embeddings": s.embedding_tags()? })))
}

#[derive(Deserialize)]
struct FormatParams {
    format: Option<String>,
}

async fn get_embeddings(
    State(s): State<AppState>,
    Path(tag): Path<String>,
    Query(p): Query<FormatParams>,
) -> ApiResult<Response> {
    let set = s.embeddings(&tag)?;
    let (format, content_type) = match p.format.as_deref() {
        None | Some("text") => (EmbeddingFormat::Text, "application/x-ndjson"),
        Some("binary") => (EmbeddingFormat::Binary, "application/octet-stream"),
        Some(other) => return Err(ApiError::BadRequest(format!("unknown format {other:?}"))),
    };
    let bytes = blocking(move || Ok(set.to_bytes(format)?)).await?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

// ---- topics ----

#[derive(Serialize)]
struct ExemplarSummary<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct TopicSummary<'a> {
    name: &'a str,
    version: u64,
    source_tag: Option<&'a str>,
    config: &'a ScoringConfig,
    config_tag: String,
    exemplars: Vec<ExemplarSummary<'a>>,
}

fn summary(entry: &TopicEntry) -> TopicSummary<'_> {
    TopicSummary {
        name: entry.topic.name(),
        version: entry.version,
        source_tag: entry.source_tag.as_deref(),
        config: &entry.config,
        config_tag: entry.config.tag(),
        exemplars: entry
            .topic
            .exemplars()
            .iter()
            .map(|e| ExemplarSummary {
                id: &e.record.id,
                text: &e.record.text,
            })
            .collect(),
    }
}

fn topic_response(s: &AppState, name: &str) -> ApiResult<Json<Value>> {
    let reg = s.registry();
    let entry = reg.get(name)?;
    Ok(Json(json!({ "registry_version": reg.version, "topic": summary(entry) })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewTopic {
    name: String,
    exemplars: Vec<SentenceRecord>,
    source_tag: String,
    mode: Option<String>,
    threshold: Option<f64>,
    w: Option<f64>,
    #[serde(default)]
    overwrite: bool,
}

async fn post_topic(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewTopic = parse_body(&body)?;
    let mode = req.mode.unwrap_or_else(|| {
        if req.threshold.is_some() { WEIGHTED } else { UNWEIGHTED }.to_string()
    });
    let config = ScoringConfig {
        mode,
        threshold: req.threshold,
        w: req.w.unwrap_or(DEFAULT_W),
        calibration: None,
    };
    s.strategies.resolve(&config)?;
    let set = s.embeddings(&req.source_tag)?;
    let topic = topic_from_set(req.name.clone(), req.exemplars, &set)?;
    let _guard = s.write.lock().await;
    s.mutate(|reg| reg.define(topic, config, Some(req.source_tag), req.overwrite))?;
    let Json(body) = topic_response(&s, &req.name)?;
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_topics(State(s): State<AppState>) -> Json<Value> {
    let reg = s.registry();
    let topics: Vec<_> = reg.topics.values().map(summary).collect();
    Json(json!({ "registry_version": reg.version, "topics": topics }))
}

async fn get_topic(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    topic_response(&s, &name)
}

async fn delete_topic(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let _guard = s.write.lock().await;
    let version = s.mutate(|reg| reg.remove(&name))?;
    Ok(Json(json!({ "registry_version": version, "deleted": name })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExemplarEdit {
    exemplars: Vec<SentenceRecord>,
    expected_version: Option<u64>,
    source_tag: Option<String>,
}

async fn put_exemplars(
    State(s): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: ExemplarEdit = parse_body(&body)?;
    let tag = match req.source_tag {
        Some(tag) => tag,
        None => s.registry().get(&name)?.source_tag.clone().ok_or_else(|| {
            ApiError::BadRequest(format!("topic {name:?} has no source_tag; pass one"))
        })?,
    };
    let set = s.embeddings(&tag)?;
    let topic = topic_from_set(name.clone(), req.exemplars, &set)?;
    let _guard = s.write.lock().await;
    s.mutate(|reg| {
        let v = reg.replace_topic(topic, req.expected_version)?;
        if let Some(entry) = reg.topics.get_mut(&name) {
            entry.source_tag = Some(tag);
        }
        Ok(v)
    })?;
    topic_response(&s, &name)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigEdit {
    mode: Option<String>,
    threshold: Option<f64>,
    w: Option<f64>,
    expected_version: Option<u64>,
}

async fn put_config(
    State(s): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: ConfigEdit = parse_body(&body)?;
    let _guard = s.write.lock().await;
    let mut config = s.registry().get(&name)?.config.clone();
    if let Some(mode) = req.mode {
        config.mode = mode;
    }
    if let Some(w) = req.w {
        config.w = w;
    }
    if let Some(t) = req.threshold {
        // a hand-set threshold no longer comes from the recorded calibration
        if config.threshold != Some(t) {
            config.calibration = None;
        }
        config.threshold = Some(t);
    }
    s.strategies.resolve(&config)?;
    s.mutate(|reg| reg.set_config(&name, config, req.expected_version))?;
    topic_response(&s, &name)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PoolParams {
    tag: Option<String>,
    /// Absent: service default; 0: score every pair.
    cap: Option<usize>,
    seed: Option<u64>,
    corpus: Option<String>,
    percentile: Option<f64>,
    bins: Option<usize>,
}

fn build_pool(s: &AppState, tag: &str, p: &PoolParams) -> ApiResult<PairwisePool> {
    let set = s.embeddings(tag)?;
    let cap = match p.cap {
        None => s.pair_cap,
        Some(0) => None,
        Some(c) => Some(c),
    };
    let seed = p.seed.unwrap_or(DEFAULT_SEED);
    let pool = match &p.corpus {
        None => pairwise_pool(&set, cap, seed)?,
        Some(id) => {
            let corpus = s.corpus(id)?;
            let view = align(&corpus, &set)?;
            let vectors: Vec<&[f32]> = view.iter().map(|(_, v)| v).collect();
            pairwise_pool_of(&vectors, set.source_tag(), cap, seed)?
        }
    };
    Ok(pool)
}

async fn calibrate(
    State(s): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let p: PoolParams = parse_optional_body(&body)?;
    if p.bins.is_some() {
        return Err(ApiError::BadRequest("bins does not apply to calibration".into()));
    }
    let tag = match &p.tag {
        Some(t) => t.clone(),
        None => s.registry().get(&name)?.source_tag.clone().ok_or_else(|| {
            ApiError::BadRequest(format!("topic {name:?} has no source_tag; pass tag"))
        })?,
    };
    let state = s.clone();
    let calibration = blocking(move || {
        let pool = build_pool(&state, &tag, &p)?;
        Ok(calibrate_threshold(&pool, p.percentile.unwrap_or(DEFAULT_PERCENTILE))?)
    })
    .await?;
    let _guard = s.write.lock().await;
    s.mutate(|reg| reg.set_calibration(&name, calibration.clone()))?;
    let Json(mut body) = topic_response(&s, &name)?;
    body["calibration"] = serde_json::to_value(&calibration).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(body))
}

// ---- matching ----

#[derive(Deserialize)]
struct MatchParams {
    corpus: String,
    mode: Option<String>,
    tag: Option<String>,
    threshold: Option<f64>,
    w: Option<f64>,
    page: Option<usize>,
    page_size: Option<usize>,
    #[serde(default)]
    include_exemplars: bool,
}

#[derive(Serialize)]
struct MatchItem<'a> {
    #[serde(flatten)]
    result: &'a MatchResult,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_call_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker_side: Option<SpeakerSide>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<&'a str>,
}

fn paging(page: Option<usize>, page_size: Option<usize>) -> ApiResult<(usize, usize)> {
    let page = page.unwrap_or(1);
    let size = page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(ApiError::BadRequest("page is 1-based".into()));
    }
    if size == 0 || size > MAX_PAGE_SIZE {
        return Err(ApiError::BadRequest(format!(
            "page_size must be in 1..={MAX_PAGE_SIZE}"
        )));
    }
    Ok((page, size))
}

fn page_body(run: &MatchRun, page: usize, size: usize) -> Value {
    let total = run.results.len();
    let start = ((page - 1).saturating_mul(size)).min(total);
    let end = start.saturating_add(size).min(total);
    let items: Vec<MatchItem> = run.results[start..end]
        .iter()
        .map(|r| {
            let record = run.corpus.get(&r.sentence_id).expect("ranked ids come from the corpus");
            MatchItem {
                result: r,
                text: &record.text,
                source_call_id: record.source_call_id.as_deref(),
                speaker_side: record.speaker_side,
                timestamp: record.timestamp.as_deref(),
            }
        })
        .collect();
    let exemplars: Vec<_> = run
        .exemplars
        .iter()
        .map(|(id, text)| json!({ "id": id, "text": text }))
        .collect();
    json!({
        "topic": run.topic,
        "topic_version": run.topic_version,
        "registry_version": run.registry_version,
        "config_tag": run.config_tag,
        "corpus": run.corpus.id(),
        "source_tag": run.source_tag,
        "total": total,
        "page": page,
        "page_size": size,
        "pages": total.div_ceil(size),
        "exemplars": exemplars,
        "results": items,
    })
}

async fn matches(
    State(s): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<MatchParams>,
) -> ApiResult<Response> {
    let (page, size) = paging(q.page, q.page_size)?;
    let reg = s.registry();
    let entry = reg.get(&name)?.clone();
    let mut config = entry.config.clone();
    if let Some(mode) = q.mode {
        config.mode = mode;
    }
    if let Some(t) = q.threshold {
        config.threshold = Some(t);
    }
    if let Some(w) = q.w {
        config.w = w;
    }
    s.strategies.resolve(&config)?;
    let tag = q.tag.or(entry.source_tag.clone()).ok_or_else(|| {
        ApiError::BadRequest(format!("topic {name:?} has no source_tag; pass tag"))
    })?;
    let corpus = s.corpus(&q.corpus)?;
    let set = s.embeddings(&tag)?;
    let candidates = align(&corpus, &set)?.len();
    let registry_version = reg.version;
    let opts = RankOptions {
        include_exemplars: q.include_exemplars,
    };

    let state = s.clone();
    let run = move || -> ApiResult<MatchRun> {
        let view = align(&corpus, &set)?;
        let results = rank(&view, &entry.topic, &config, &state.strategies, opts)?;
        Ok(MatchRun {
            topic: entry.topic.name().to_string(),
            topic_version: entry.version,
            registry_version,
            config_tag: ranking_tag(set.source_tag(), &config),
            source_tag: set.source_tag().to_string(),
            exemplars: entry
                .topic
                .exemplars()
                .iter()
                .map(|e| (e.record.id.clone(), e.record.text.clone()))
                .collect(),
            corpus: corpus.clone(),
            results,
        })
    };

    if candidates > s.sync_limit {
        let id = s.new_job();
        let state = s.clone();
        tokio::task::spawn_blocking(move || {
            let outcome = match run() {
                Ok(r) => JobState::Done(Arc::new(r)),
                Err(e) => JobState::Failed {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                },
            };
            state.finish_job(id, outcome);
        });
        return Ok((
            StatusCode::ACCEPTED,
            Json(json!({ "job": id, "status": "running", "status_url": format!("/jobs/{id}") })),
        )
            .into_response());
    }
    let run = blocking(run).await?;
    Ok(Json(page_body(&run, page, size)).into_response())
}

#[derive(Deserialize)]
struct JobParams {
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn get_job(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<JobParams>,
) -> ApiResult<Response> {
    let (page, size) = paging(q.page, q.page_size)?;
    match s.job(id) {
        None => Err(ApiError::not_found("unknown_job", format!("no job {id}"))),
        Some(JobState::Running) => Ok((
            StatusCode::ACCEPTED,
            Json(json!({ "job": id, "status": "running" })),
        )
            .into_response()),
        Some(JobState::Failed { kind, message }) => Ok(Json(json!({
            "job": id,
            "status": "failed",
            "error": kind,
            "message": message,
        }))
        .into_response()),
        Some(JobState::Done(run)) => Ok(Json(json!({
            "job": id,
            "status": "done",
            "result": page_body(&run, page, size),
        }))
        .into_response()),
    }
}

// ---- diagnostics ----

#[derive(Deserialize)]
struct DistributionParams {
    tag: String,
    bins: Option<usize>,
    cap: Option<usize>,
    seed: Option<u64>,
    corpus: Option<String>,
}

async fn diag_distribution(
    State(s): State<AppState>,
    Query(q): Query<DistributionParams>,
) -> ApiResult<Json<Value>> {
    let state = s.clone();
    let summary = blocking(move || {
        let params = PoolParams {
            tag: None,
            cap: q.cap,
            seed: q.seed,
            corpus: q.corpus,
            percentile: None,
            bins: None,
        };
        let pool = build_pool(&state, &q.tag, &params)?;
        Ok(distribution(&pool, q.bins.unwrap_or(DEFAULT_BINS))?)
    })
    .await?;
    Ok(Json(serde_json::to_value(summary).map_err(|e| ApiError::Internal(e.to_string()))?))
}

#[derive(Deserialize)]
struct HeatmapParams {
    tag: String,
    ids: String,
    corpus: Option<String>,
}

async fn diag_heatmap(
    State(s): State<AppState>,
    Query(q): Query<HeatmapParams>,
) -> ApiResult<Json<Value>> {
    let set: Arc<EmbeddingSet> = s.embeddings(&q.tag)?;
    let corpus = q.corpus.as_deref().map(|c| s.corpus(c)).transpose()?;
    let ids: Vec<&str> = q.ids.split(',').map(str::trim).filter(|i| !i.is_empty()).collect();
    let mut records = Vec::with_capacity(ids.len());
    let mut vectors = Vec::with_capacity(ids.len());
    for id in &ids {
        let v = set
            .unit_by_id(id)
            .ok_or_else(|| qmatch_core::Error::UnknownId(id.to_string()))?;
        let record = match &corpus {
            Some(c) => c
                .get(id)
                .cloned()
                .ok_or_else(|| qmatch_core::Error::UnknownId(id.to_string()))?,
            None => SentenceRecord::new(*id, *id),
        };
        records.push(record);
        vectors.push(v);
    }
    let pairs: Vec<(&SentenceRecord, &[f32])> = records.iter().zip(vectors).collect();
    let report = heatmap(set.source_tag(), &pairs)?;
    Ok(Json(serde_json::to_value(report).map_err(|e| ApiError::Internal(e.to_string()))?))
}

// ---- evaluation ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRanking {
    config_tag: String,
    /// In rank order.
    results: Vec<MatchResult>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRequest {
    topic: String,
    rankings: Vec<EvalRanking>,
    labels: Vec<EvalLabel>,
    cutoffs: Vec<usize>,
    target_precision: Option<f64>,
}

async fn post_eval(body: Bytes) -> ApiResult<Json<Value>> {
    let req: EvalRequest = parse_body(&body)?;
    let out = blocking(move || {
        let labels = LabelSet::from_labels(req.labels)?;
        let rankings: Vec<Ranking> = req
            .rankings
            .into_iter()
            .map(|r| Ranking {
                config_tag: r.config_tag,
                results: r.results,
            })
            .collect();
        let reports = eval_report(&rankings, &labels, &req.topic, &req.cutoffs, req.target_precision)?;
        let table = render_table(&reports);
        Ok(json!({ "reports": reports, "table": table }))
    })
    .await?;
    Ok(Json(out))
}
