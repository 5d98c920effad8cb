//! HTTP facade over the matching engine.
//!
//! All state lives in a data directory: `corpora/<id>.jsonl`,
//! `embeddings/<tag>.qemb` and `topics.json`. Every write goes through a
//! temp-file-then-rename, so a restart always sees a consistent registry.

mod api;
mod error;
mod state;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

pub use error::{ApiError, ApiResult};
pub use state::AppState;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "qmatch-data";
pub const DEFAULT_PAIR_CAP: usize = 1_000_000;
/// Candidate pools larger than this are ranked in a background job.
pub const DEFAULT_SYNC_LIMIT: usize = 50_000;
pub const DEFAULT_PAGE_SIZE: usize = 50;

pub const ENV_DATA_DIR: &str = "QMATCH_DATA_DIR";
pub const ENV_BIND: &str = "QMATCH_BIND";
pub const ENV_PAIR_CAP: &str = "QMATCH_PAIR_CAP";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Default pair-sampling cap for calibration and diagnostics; `None` scores every pair.
    pub pair_cap: Option<usize>,
    pub sync_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            bind: DEFAULT_BIND.to_string(),
            pair_cap: Some(DEFAULT_PAIR_CAP),
            sync_limit: DEFAULT_SYNC_LIMIT,
        }
    }
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            ..Self::default()
        }
    }

    /// Defaults overridden by `QMATCH_DATA_DIR`, `QMATCH_BIND` and
    /// `QMATCH_PAIR_CAP` (`none` disables the cap).
    pub fn from_env() -> Result<Self, StartError> {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self, StartError> {
        let mut cfg = Self::default();
        if let Some(dir) = var(ENV_DATA_DIR) {
            cfg.data_dir = dir.into();
        }
        if let Some(bind) = var(ENV_BIND) {
            cfg.bind = bind;
        }
        if let Some(cap) = var(ENV_PAIR_CAP) {
            cfg.pair_cap = parse_cap(&cap).ok_or_else(|| StartError::Config(format!(
                "{ENV_PAIR_CAP} must be a positive integer or 'none', got {cap:?}"
            )))?;
        }
        Ok(cfg)
    }
}

fn parse_cap(s: &str) -> Option<Option<usize>> {
    if s.eq_ignore_ascii_case("none") {
        return Some(None);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => None,
        Ok(n) => Some(Some(n)),
    }
}

#[derive(Debug)]
pub enum StartError {
    Config(String),
    Unwritable { path: PathBuf, source: std::io::Error },
    Bind { addr: String, source: std::io::Error },
    Registry(qmatch_core::Error),
}

impl StartError {
    pub fn kind(&self) -> &'static str {
        match self {
            StartError::Config(_) => "invalid_config",
            StartError::Unwritable { .. } => "unwritable_data_dir",
            StartError::Bind { source, .. } if source.kind() == std::io::ErrorKind::AddrInUse => {
                "port_in_use"
            }
            StartError::Bind { .. } => "bind_failed",
            StartError::Registry(e) => e.kind(),
        }
    }
}

impl std::fmt::Display for StartError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartError::Config(m) => f.write_str(m),
            StartError::Unwritable { path, source } => {
                write!(f, "data directory {} is not writable: {source}", path.display())
            }
            StartError::Bind { addr, source } => write!(f, "cannot bind {addr}: {source}"),
            StartError::Registry(e) => write!(f, "cannot load topic registry: {e}"),
        }
    }
}

impl std::error::Error for StartError {}

pub fn router(state: AppState) -> axum::Router {
    api::routes().with_state(state)
}

/// A bound, running server; dropped handles keep running until [`Running::shutdown`].
pub struct Running {
    addr: SocketAddr,
    shutdown: tokio::sync::oneshot::Sender<()>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Opens the data directory and binds the listener; returns once requests are being served.
pub async fn start(config: ServiceConfig) -> Result<Running, StartError> {
    let state = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| StartError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| StartError::Bind {
        addr: config.bind.clone(),
        source,
    })?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(state);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(Running {
        addr,
        shutdown: tx,
        task,
    })
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), StartError> {
    let running = start(config).await?;
    let addr = running.addr;
    running.task.await.map_err(|e| StartError::Bind {
        addr: addr.to_string(),
        source: std::io::Error::other(e),
    })?
    .map_err(|source| StartError::Bind {
        addr: addr.to_string(),
        source,
    })
}

pub(crate) fn ensure_writable(dir: &Path) -> Result<(), StartError> {
    let unwritable = |source| StartError::Unwritable {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".qmatch-write-probe");
    std::fs::write(&probe, b"ok").map_err(unwritable)?;
    std::fs::remove_file(&probe).map_err(unwritable)
}
