//! The `qmatch` command line.
//!
//! Every command that writes a file also writes `<file>.manifest.json` next to
//! it. Failures print one line, `qmatch: error[<kind>]: <message>`, and exit
//! non-zero.

pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qmatch_core::corpus::{corpus_stats, sample, Corpus, CorpusStore, StopWords};
use qmatch_core::diagnostics::{distribution, heatmap, DEFAULT_BINS};
use qmatch_core::embeddings::{align, load_embeddings, EmbeddingFormat, EmbeddingSet};
use qmatch_core::evaluator::{eval_report, render_table, LabelSet, Ranking};
use qmatch_core::matcher::{
    calibrate_threshold, rank, ranking_tag, top_k, topic_from_set, MatchRecord, RankOptions, ScoringConfig,
    StrategyRegistry, DEFAULT_W, UNWEIGHTED, WEIGHTED,
};
use qmatch_core::registry::RegistryStore;
use qmatch_core::simcore::{pairwise_pool, pairwise_pool_of, PairwisePool};

use manifest::Recorder;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "qmatch", version, about = "Exemplar-based semantic question matching")]
pub struct Cli {
    /// Seed for every random choice (sampling, pair-pool sampling)
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Where corpora and the topic registry live
    #[arg(long, global = true, env = "QMATCH_DATA_DIR", default_value = "qmatch-data")]
    pub data_dir: PathBuf,
    /// Suppress informational output on stdout
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Embedding file format for outputs (default: from the file extension)
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for EmbeddingFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => EmbeddingFormat::Text,
            FormatArg::Binary => EmbeddingFormat::Binary,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a sentence file and store it as a corpus
    Ingest(IngestArgs),
    /// Corpus size, token-length and stop-word statistics
    Stats(StatsArgs),
    /// Draw a seeded uniform sample of a corpus into a new corpus
    Sample(SampleArgs),
    /// Embedding file utilities
    #[command(subcommand)]
    Emb(EmbCommand),
    /// Manage topics in the registry
    #[command(subcommand)]
    Topic(TopicCommand),
    /// Pick a match threshold from the pairwise-similarity distribution
    Calibrate(CalibrateArgs),
    /// Rank a corpus against a topic
    Match(MatchArgs),
    /// Anisotropy diagnostics
    #[command(subcommand)]
    Diag(DiagCommand),
    /// Precision-at-K and hit-rate report over ranking files
    Eval(EvalArgs),
    /// Run the HTTP service over the data directory
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Sentence records, one JSON object per line
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Corpus id to store it under
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus id in the data directory
    #[arg(long)]
    pub corpus: String,
    /// Stop-word list, one word per line (default: bundled English list)
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Write the statistics here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Corpus id to sample from
    #[arg(long)]
    pub corpus: String,
    /// Number of sentences to draw
    #[arg(long)]
    pub n: usize,
    /// Id for the sampled corpus
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Subcommand)]
pub enum EmbCommand {
    /// Convert an embedding file between the text and binary formats
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Input embedding file (either format)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path
    #[arg(long)]
    pub out: PathBuf,
    /// Source tag for the output (default: keep the input's)
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum TopicCommand {
    /// Define a topic from exemplar sentences
    Add(TopicAddArgs),
    /// List topics and their scoring configs
    List,
    /// Delete a topic
    Remove(TopicRemoveArgs),
}

#[derive(Debug, Args)]
pub struct TopicAddArgs {
    /// Topic name
    #[arg(long)]
    pub name: String,
    /// Exemplar sentence records, one JSON object per line
    #[arg(long)]
    pub exemplars: PathBuf,
    /// Embedding file holding a vector for every exemplar id
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Scoring mode (default: weighted if --threshold is given, else unweighted)
    #[arg(long)]
    pub mode: Option<String>,
    /// Hit threshold for weighted scoring
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Hit weight for weighted scoring
    #[arg(long, default_value_t = DEFAULT_W)]
    pub w: f64,
    /// Replace an existing topic of the same name
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TopicRemoveArgs {
    /// Topic name
    #[arg(long)]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Embedding file
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Restrict the pool to sentences of this corpus
    #[arg(long)]
    pub corpus: Option<String>,
    /// Score a seeded sample of at most this many pairs instead of all of them
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Percentile of the pairwise distribution to use as threshold
    #[arg(long, default_value_t = 90.0)]
    pub percentile: f64,
    /// Store the threshold on this topic and switch it to weighted scoring
    #[arg(long)]
    pub topic: Option<String>,
    /// Write the calibration record here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Corpus id in the data directory
    #[arg(long)]
    pub corpus: String,
    /// Embedding file covering the corpus
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Topic name
    #[arg(long)]
    pub topic: String,
    /// Scoring mode (default: the topic's)
    #[arg(long)]
    pub mode: Option<String>,
    /// Override the topic's threshold
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Override the topic's hit weight
    #[arg(long)]
    pub w: Option<f64>,
    /// Keep only the top K matches (default: the full ranking)
    #[arg(long)]
    pub top: Option<usize>,
    /// Ranking output, one JSON match per line
    #[arg(long)]
    pub out: PathBuf,
    /// Also rank sentences that are themselves exemplars
    #[arg(long)]
    pub include_exemplars: bool,
}

#[derive(Debug, Subcommand)]
pub enum DiagCommand {
    /// Pairwise-cosine distribution summary and histogram
    Dist(DistArgs),
    /// Labelled cosine matrix of a few sentences
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Histogram bins over [-1, 1]
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Output JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Embedding file
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Comma-separated sentence ids (2 to 64)
    #[arg(long, value_delimiter = ',', required = true)]
    pub ids: Vec<String>,
    /// Corpus id used to label rows with sentence text
    #[arg(long)]
    pub corpus: Option<String>,
    /// Output JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranking files from `qmatch match`, comma-separated; one report row each
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranking: Vec<PathBuf>,
    /// Relevance labels, one JSON object per line
    #[arg(long)]
    pub labels: PathBuf,
    /// Precision cutoffs K
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200])]
    pub cutoffs: Vec<usize>,
    /// Also report the hit rate at this precision
    #[arg(long)]
    pub target_precision: Option<f64>,
    /// Topic whose labels to use (default: the topic named in the rankings)
    #[arg(long)]
    pub topic: Option<String>,
    /// Report table output
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report rows as JSON here
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on
    #[arg(long, env = "QMATCH_BIND", default_value = qmatch_service::DEFAULT_BIND)]
    pub bind: String,
    /// Default pair-sampling cap for calibration and diagnostics ("none" for all pairs)
    #[arg(long, env = "QMATCH_PAIR_CAP")]
    pub pair_cap: Option<String>,
}

/// A failure reported as `error[<kind>]: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::from(qmatch_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// The single line printed on stderr.
    pub fn line(&self) -> String {
        let message = self.message.replace(['\n', '\r'], " ");
        format!("qmatch: error[{}]: {}", self.kind, message)
    }
}

impl From<qmatch_core::Error> for CliError {
    fn from(e: qmatch_core::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<qmatch_service::StartError> for CliError {
    fn from(e: qmatch_service::StartError) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (including the program name) and runs it. Returns the exit code.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let first = e.render().to_string();
            let first = first
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", CliError::new("usage", first).line());
            return 2;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.line());
            1
        }
    }
}

pub fn command() -> clap::Command {
    Cli::command()
}

struct Ctx<'a> {
    cli: &'a Cli,
    recorder: Recorder<'a>,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn corpora(&self) -> CorpusStore {
        CorpusStore::new(self.cli.data_dir.join("corpora"))
    }

    fn registry(&self) -> RegistryStore {
        RegistryStore::in_dir(&self.cli.data_dir)
    }

    fn load_corpus(&self, id: &str) -> CliResult<(Corpus, PathBuf)> {
        let store = self.corpora();
        if !store.exists(id) {
            return Err(CliError::new(
                "unknown_corpus",
                format!("no corpus {id:?} in {}", store.root().display()),
            ));
        }
        Ok((store.load(id)?, store.path(id)))
    }

    fn say(&mut self, msg: impl std::fmt::Display) -> CliResult {
        if !self.cli.quiet {
            writeln!(self.out, "{msg}").map_err(|e| CliError::new("io", e.to_string()))?;
        }
        Ok(())
    }

    fn emit(&mut self, bytes: &[u8]) -> CliResult {
        self.out
            .write_all(bytes)
            .map_err(|e| CliError::new("io", e.to_string()))
    }
}

fn open_lines(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

fn with_path(path: &Path, e: qmatch_core::Error) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn run(cli: &Cli, argv: &[String], out: &mut dyn Write) -> CliResult {
    let mut ctx = Ctx {
        cli,
        recorder: Recorder {
            argv,
            seed: cli.seed,
        },
        out,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Stats(a) => stats(&mut ctx, a),
        Command::Sample(a) => sample_cmd(&mut ctx, a),
        Command::Emb(EmbCommand::Convert(a)) => convert(&mut ctx, a),
        Command::Topic(TopicCommand::Add(a)) => topic_add(&mut ctx, a),
        Command::Topic(TopicCommand::List) => topic_list(&mut ctx),
        Command::Topic(TopicCommand::Remove(a)) => topic_remove(&mut ctx, a),
        Command::Calibrate(a) => calibrate(&mut ctx, a),
        Command::Match(a) => match_cmd(&mut ctx, a),
        Command::Diag(DiagCommand::Dist(a)) => diag_dist(&mut ctx, a),
        Command::Diag(DiagCommand::Heatmap(a)) => diag_heatmap(&mut ctx, a),
        Command::Eval(a) => eval(&mut ctx, a),
        Command::Serve(a) => serve(&mut ctx, a),
    }
}

fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> CliResult {
    let store = ctx.corpora();
    let corpus = store
        .ingest(&a.id, open_lines(&a.input)?)
        .map_err(|e| with_path(&a.input, e))?;
    store.save(&corpus)?;
    let path = store.path(&a.id);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    ctx.recorder
        .record(&path, &bytes, &[&a.input], json!({ "corpus_id": a.id }))?;
    ctx.say(format!("ingested {} sentences as corpus {}", corpus.len(), a.id))
}

fn stats(ctx: &mut Ctx, a: &StatsArgs) -> CliResult {
    let (corpus, corpus_path) = ctx.load_corpus(&a.corpus)?;
    let (stopwords, version) = match &a.stopwords {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            (StopWords::parse(&text).map_err(|e| with_path(p, e))?, p.display().to_string())
        }
        None => (
            StopWords::bundled(),
            qmatch_core::corpus::BUNDLED_STOPWORDS_VERSION.to_string(),
        ),
    };
    let stats = corpus_stats(&corpus, &stopwords)?;
    let report = json!({ "corpus": a.corpus, "stopwords": version, "stats": stats });
    let bytes = pretty(&report);
    match &a.out {
        Some(out) => {
            let mut inputs: Vec<&Path> = vec![&corpus_path];
            if let Some(p) = &a.stopwords {
                inputs.push(p);
            }
            ctx.recorder
                .write(out, &bytes, &inputs, json!({ "stopwords": version }))?;
            ctx.say(format!("wrote {}", out.display()))
        }
        None => ctx.emit(&bytes),
    }
}

fn sample_cmd(ctx: &mut Ctx, a: &SampleArgs) -> CliResult {
    let (corpus, corpus_path) = ctx.load_corpus(&a.corpus)?;
    let sampled = sample(&corpus, a.n, ctx.cli.seed, &a.id)?;
    let store = ctx.corpora();
    store.save(&sampled)?;
    let path = store.path(&a.id);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    ctx.recorder.record(
        &path,
        &bytes,
        &[&corpus_path],
        json!({ "from": a.corpus, "n": a.n }),
    )?;
    ctx.say(format!("sampled {} of {} sentences into corpus {}", sampled.len(), corpus.len(), a.id))
}

fn load_set(path: &Path) -> CliResult<EmbeddingSet> {
    load_embeddings(path).map_err(|e| with_path(path, e))
}

fn convert(ctx: &mut Ctx, a: &ConvertArgs) -> CliResult {
    let mut set = load_set(&a.input)?;
    if let Some(tag) = &a.tag {
        set = set.with_source_tag(tag.clone())?;
    }
    let format = ctx
        .cli
        .format
        .map(EmbeddingFormat::from)
        .unwrap_or_else(|| EmbeddingFormat::from_extension(&a.out));
    let bytes = set.to_bytes(format)?;
    ctx.recorder.write(
        &a.out,
        &bytes,
        &[&a.input],
        json!({
            "format": format!("{format:?}").to_lowercase(),
            "source_tag": set.source_tag(),
        }),
    )?;
    ctx.say(format!(
        "wrote {} vectors (dim {}, tag {}) to {}",
        set.len(),
        set.dim(),
        set.source_tag(),
        a.out.display()
    ))
}

fn topic_add(ctx: &mut Ctx, a: &TopicAddArgs) -> CliResult {
    let records = qmatch_core::corpus::read_records(open_lines(&a.exemplars)?)
        .map_err(|e| with_path(&a.exemplars, e))?;
    let set = load_set(&a.embeddings)?;
    let topic = topic_from_set(a.name.clone(), records, &set)?;
    let mode = a.mode.clone().unwrap_or_else(|| {
        if a.threshold.is_some() { WEIGHTED } else { UNWEIGHTED }.to_string()
    });
    let config = ScoringConfig {
        mode,
        threshold: a.threshold,
        w: a.w,
        calibration: None,
    };
    StrategyRegistry::builtin().resolve(&config)?;
    let n = topic.len();
    let tag = set.source_tag().to_string();
    let version = ctx
        .registry()
        .update(|reg| reg.define(topic, config, Some(tag), a.overwrite))?;
    ctx.say(format!(
        "topic {:?} defined with {n} exemplars (registry version {version})",
        a.name
    ))
}

fn topic_list(ctx: &mut Ctx) -> CliResult {
    let reg = ctx.registry().load()?;
    let lines: Vec<String> = reg
        .topics
        .values()
        .map(|e| {
            format!(
                "{}\t{} exemplars\t{}\tv{}",
                e.topic.name(),
                e.topic.len(),
                e.config.tag(),
                e.version
            )
        })
        .collect();
    for line in lines {
        ctx.emit(format!("{line}\n").as_bytes())?;
    }
    Ok(())
}

fn topic_remove(ctx: &mut Ctx, a: &TopicRemoveArgs) -> CliResult {
    let version = ctx.registry().update(|reg| reg.remove(&a.name))?;
    ctx.say(format!("removed topic {:?} (registry version {version})", a.name))
}

/// The pool, plus the files it was computed from.
fn build_pool(ctx: &Ctx, a: &PoolArgs) -> CliResult<(PairwisePool, Vec<PathBuf>)> {
    let set = load_set(&a.embeddings)?;
    let mut inputs = vec![a.embeddings.clone()];
    let pool = match &a.corpus {
        None => pairwise_pool(&set, a.cap, ctx.cli.seed)?,
        Some(id) => {
            let (corpus, path) = ctx.load_corpus(id)?;
            inputs.push(path);
            let view = align(&corpus, &set)?;
            let vectors: Vec<&[f32]> = view.iter().map(|(_, v)| v).collect();
            pairwise_pool_of(&vectors, set.source_tag(), a.cap, ctx.cli.seed)?
        }
    };
    Ok((pool, inputs))
}

fn calibrate(ctx: &mut Ctx, a: &CalibrateArgs) -> CliResult {
    let (pool, inputs) = build_pool(ctx, &a.pool)?;
    let calibration = calibrate_threshold(&pool, a.percentile)?;
    if let Some(name) = &a.topic {
        let cal = calibration.clone();
        ctx.registry().update(|reg| {
            let mut config = reg.get(name)?.config.clone().with_calibration(cal);
            config.mode = WEIGHTED.to_string();
            reg.set_config(name, config, None)
        })?;
    }
    let bytes = pretty(&calibration);
    match &a.out {
        Some(out) => {
            let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            ctx.recorder.write(
                out,
                &bytes,
                &inputs,
                json!({
                    "percentile": a.percentile,
                    "cap": a.pool.cap,
                    "corpus": a.pool.corpus,
                    "topic": a.topic,
                }),
            )?;
            ctx.say(format!(
                "threshold {} (p{} of {} pairs) written to {}",
                calibration.threshold,
                a.percentile,
                calibration.pair_count,
                out.display()
            ))
        }
        None => ctx.emit(&bytes),
    }
}

fn match_cmd(ctx: &mut Ctx, a: &MatchArgs) -> CliResult {
    let (corpus, corpus_path) = ctx.load_corpus(&a.corpus)?;
    let set = load_set(&a.embeddings)?;
    let registry_path = ctx.registry().path().to_path_buf();
    let reg = ctx.registry().load()?;
    let entry = reg.get(&a.topic)?;
    let mut config = entry.config.clone();
    if let Some(mode) = &a.mode {
        config.mode = mode.clone();
    }
    if let Some(t) = a.threshold {
        config.threshold = Some(t);
    }
    if let Some(w) = a.w {
        config.w = w;
    }
    let view = align(&corpus, &set)?;
    let ranked = rank(
        &view,
        &entry.topic,
        &config,
        &StrategyRegistry::builtin(),
        RankOptions {
            include_exemplars: a.include_exemplars,
        },
    )?;
    let kept = match a.top {
        Some(k) => top_k(&ranked, k),
        None => &ranked[..],
    };
    let config_tag = ranking_tag(set.source_tag(), &config);
    let mut bytes = Vec::new();
    for result in kept {
        let record = MatchRecord {
            topic: a.topic.clone(),
            config_tag: config_tag.clone(),
            result: result.clone(),
        };
        serde_json::to_writer(&mut bytes, &record).expect("serializable");
        bytes.push(b'\n');
    }
    ctx.recorder.write(
        &a.out,
        &bytes,
        &[&corpus_path, &a.embeddings, &registry_path],
        json!({
            "topic": a.topic,
            "topic_version": entry.version,
            "scoring": config,
            "config_tag": config_tag,
            "source_tag": set.source_tag(),
            "top": a.top,
            "include_exemplars": a.include_exemplars,
            "candidates": ranked.len(),
            "corpus_only": view.corpus_only().len(),
            "embedding_only": view.embedding_only().len(),
        }),
    )?;
    ctx.say(format!(
        "ranked {} candidates for {:?} with {config_tag}; wrote {} to {}",
        ranked.len(),
        a.topic,
        kept.len(),
        a.out.display()
    ))
}

fn diag_dist(ctx: &mut Ctx, a: &DistArgs) -> CliResult {
    let (pool, inputs) = build_pool(ctx, &a.pool)?;
    let summary = distribution(&pool, a.bins)?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.recorder.write(
        &a.out,
        &pretty(&summary),
        &inputs,
        json!({
            "bins": a.bins,
            "cap": a.pool.cap,
            "corpus": a.pool.corpus,
            "sampled": pool.sampled,
        }),
    )?;
    ctx.say(format!(
        "{}: {} pairs, mean {:.4}, 10-90 spread {:.4}; wrote {}",
        summary.source_tag,
        summary.pair_count,
        summary.mean,
        summary.spread_10_90(),
        a.out.display()
    ))
}

fn diag_heatmap(ctx: &mut Ctx, a: &HeatmapArgs) -> CliResult {
    let set = load_set(&a.embeddings)?;
    let mut inputs = vec![a.embeddings.clone()];
    let corpus = match &a.corpus {
        Some(id) => {
            let (c, p) = ctx.load_corpus(id)?;
            inputs.push(p);
            Some(c)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(a.ids.len());
    let mut vectors = Vec::with_capacity(a.ids.len());
    for id in &a.ids {
        let v = set
            .unit_by_id(id)
            .ok_or_else(|| qmatch_core::Error::UnknownId(id.clone()))?;
        let record = match &corpus {
            Some(c) => c
                .get(id)
                .cloned()
                .ok_or_else(|| qmatch_core::Error::UnknownId(id.clone()))?,
            None => qmatch_core::corpus::SentenceRecord::new(id.clone(), id.clone()),
        };
        records.push(record);
        vectors.push(v);
    }
    let pairs: Vec<_> = records.iter().zip(vectors).collect();
    let report = heatmap(set.source_tag(), &pairs)?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.recorder
        .write(&a.out, &pretty(&report), &inputs, json!({ "ids": a.ids }))?;
    ctx.say(format!("wrote {}x{} matrix to {}", a.ids.len(), a.ids.len(), a.out.display()))
}

/// Reads a ranking file written by `qmatch match`.
pub fn read_ranking(path: &Path) -> CliResult<(String, Ranking)> {
    let mut topic: Option<String> = None;
    let mut config_tag: Option<String> = None;
    let mut results = Vec::new();
    for (i, line) in open_lines(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MatchRecord = serde_json::from_str(&line).map_err(|e| {
            with_path(
                path,
                qmatch_core::Error::Malformed {
                    line: i + 1,
                    reason: e.to_string(),
                },
            )
        })?;
        for (seen, now, what) in [
            (&mut topic, &record.topic, "topic"),
            (&mut config_tag, &record.config_tag, "config_tag"),
        ] {
            match seen {
                None => *seen = Some(now.clone()),
                Some(s) if s != now => {
                    return Err(CliError::new(
                        "mixed_ranking",
                        format!("{}: line {} has {what} {now:?}, expected {s:?}", path.display(), i + 1),
                    ))
                }
                _ => {}
            }
        }
        results.push(record.result);
    }
    let (Some(topic), Some(config_tag)) = (topic, config_tag) else {
        return Err(with_path(path, qmatch_core::Error::EmptyInput));
    };
    Ok((topic, Ranking { config_tag, results }))
}

fn eval(ctx: &mut Ctx, a: &EvalArgs) -> CliResult {
    let mut topics = Vec::new();
    let mut rankings = Vec::new();
    for path in &a.ranking {
        let (topic, ranking) = read_ranking(path)?;
        topics.push(topic);
        rankings.push(ranking);
    }
    let topic = match &a.topic {
        Some(t) => t.clone(),
        None => {
            if let Some(other) = topics.iter().find(|t| **t != topics[0]) {
                return Err(CliError::new(
                    "mixed_ranking",
                    format!("rankings cover topics {:?} and {other:?}; pass --topic", topics[0]),
                ));
            }
            topics[0].clone()
        }
    };
    let labels = LabelSet::read(open_lines(&a.labels)?).map_err(|e| with_path(&a.labels, e))?;
    let reports = eval_report(&rankings, &labels, &topic, &a.cutoffs, a.target_precision)?;
    let table = render_table(&reports);

    let mut inputs: Vec<&Path> = a.ranking.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.labels);
    let config = json!({
        "topic": topic,
        "cutoffs": a.cutoffs,
        "target_precision": a.target_precision,
    });
    ctx.recorder.write(&a.out, table.as_bytes(), &inputs, config.clone())?;
    if let Some(path) = &a.json {
        ctx.recorder.write(path, &pretty(&reports), &inputs, config)?;
    }
    if !ctx.cli.quiet {
        ctx.emit(table.as_bytes())?;
    }
    Ok(())
}

fn serve(ctx: &mut Ctx, a: &ServeArgs) -> CliResult {
    let mut config = qmatch_service::ServiceConfig::new(&ctx.cli.data_dir);
    config.bind = a.bind.clone();
    if let Some(cap) = &a.pair_cap {
        config = qmatch_service::ServiceConfig::from_vars(|k| match k {
            qmatch_service::ENV_PAIR_CAP => Some(cap.clone()),
            qmatch_service::ENV_DATA_DIR => Some(ctx.cli.data_dir.display().to_string()),
            qmatch_service::ENV_BIND => Some(a.bind.clone()),
            _ => None,
        })?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
    runtime.block_on(async {
        let running = qmatch_service::start(config).await?;
        ctx.say(format!(
            "serving {} on {}",
            ctx.cli.data_dir.display(),
            running.url()
        ))?;
        ctx.out.flush().ok();
        std::future::pending::<()>().await;
        drop(running);
        Ok(())
    })
}
