//! HTTP JSON facade over `ucreg-core`.
//!
//! Datasets, trained models, panorama files and query sessions live in an
//! in-memory registry keyed by opaque ids and expire after an idle period.
//! Responses are the core export types serialized as-is.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::trace::TraceLayer;

use ucreg_core::chart::{Evaluation, ModelReport};
use ucreg_core::data::Dataset;
use ucreg_core::query::QuerySession;
use ucreg_core::store::PanoramaFile;

mod error;
mod registry;
mod routes;

pub use error::ApiError;
pub use registry::Store;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_UPLOAD: usize = 64 * 1024 * 1024;
pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);
pub const DATASET_ID_HEADER: &str = "x-dataset-id";
pub const MODEL_ID_HEADER: &str = "x-model-id";
pub const PANORAMA_ID_HEADER: &str = "x-panorama-id";
pub const SESSION_ID_HEADER: &str = "x-session-id";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub addr: SocketAddr,
    /// Request body cap in bytes.
    pub max_upload: usize,
    /// Idle time after which a registry entry is dropped.
    pub ttl: Duration,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.parse().expect("valid default address"),
            max_upload: DEFAULT_MAX_UPLOAD,
            ttl: DEFAULT_TTL,
            cors_origin: None,
        }
    }
}

impl Config {
    /// Reads `UCREG_ADDR`, `UCREG_MAX_UPLOAD` (bytes), `UCREG_SESSION_TTL`
    /// (seconds) and `UCREG_CORS_ORIGIN` over the defaults.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("UCREG_ADDR") {
            c.addr = v.parse().map_err(|e| format!("UCREG_ADDR `{v}`: {e}"))?;
        }
        if let Some(v) = var("UCREG_MAX_UPLOAD") {
            c.max_upload = v.parse().map_err(|e| format!("UCREG_MAX_UPLOAD `{v}`: {e}"))?;
        }
        if let Some(v) = var("UCREG_SESSION_TTL") {
            let secs: u64 = v.parse().map_err(|e| format!("UCREG_SESSION_TTL `{v}`: {e}"))?;
            c.ttl = Duration::from_secs(secs);
        }
        c.cors_origin = var("UCREG_CORS_ORIGIN");
        Ok(c)
    }
}

pub struct ModelEntry {
    pub report: ModelReport,
    pub evaluation: Evaluation,
}

pub struct PanoramaEntry {
    pub file: Arc<PanoramaFile>,
    /// Dataset the panorama was built from or attached to on import.
    pub dataset: Option<Arc<Dataset>>,
}

pub struct SessionEntry {
    /// Registry id of the panorama the session queries.
    pub panorama: String,
    pub session: Mutex<QuerySession>,
}

pub struct AppState {
    pub datasets: Store<Arc<Dataset>>,
    pub models: Store<ModelEntry>,
    pub panoramas: Store<PanoramaEntry>,
    pub sessions: Store<SessionEntry>,
}

impl AppState {
    pub fn new(ttl: Duration) -> Self {
        Self {
            datasets: Store::new(ttl),
            models: Store::new(ttl),
            panoramas: Store::new(ttl),
            sessions: Store::new(ttl),
        }
    }
}

pub fn router(config: &Config) -> Router {
    router_with_state(config, Arc::new(AppState::new(config.ttl)))
}

pub fn router_with_state(config: &Config, state: Arc<AppState>) -> Router {
    let origin = match config
        .cors_origin
        .as_deref()
        .and_then(|o| HeaderValue::from_str(o).ok())
    {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([
            header::HeaderName::from_static(DATASET_ID_HEADER),
            header::HeaderName::from_static(MODEL_ID_HEADER),
            header::HeaderName::from_static(PANORAMA_ID_HEADER),
            header::HeaderName::from_static(SESSION_ID_HEADER),
            header::CONTENT_DISPOSITION,
        ]);
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", post(routes::upload_dataset))
        .route("/datasets/{id}", get(routes::dataset_summary))
        .route("/datasets/{id}/target", post(routes::set_target))
        .route("/datasets/{id}/panorama", get(routes::dataset_panorama))
        .route("/models", post(routes::create_model))
        .route("/models/{id}", get(routes::model_report))
        .route("/models/{id}/lorrviz", get(routes::model_lorrviz))
        .route("/panoramas", post(routes::create_panorama))
        .route("/panoramas/import", post(routes::import_panorama))
        .route("/panoramas/{id}", get(routes::download_panorama))
        .route("/query", post(routes::query_profile))
        .route("/query/state", post(routes::submit_state))
        .route("/query/state/{session}", get(routes::session_snapshot))
        .route("/query/state/{session}/streamgraph.csv", get(routes::session_streamgraph_csv))
        .route("/query/batch", post(routes::batch))
        .route("/query/similar", get(routes::similar))
        .layer(DefaultBodyLimit::max(config.max_upload))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Binds `config.addr` and serves until Ctrl-C.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(&config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
