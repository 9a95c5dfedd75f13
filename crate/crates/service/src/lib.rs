//! Read-only HTTP API over the runs below a data root.
//!
//! Every endpoint is a GET whose body is a pure function of the run and the
//! query. Bodies carry an ETag derived from the canonical query and the run
//! fingerprint, and are kept in a byte-bounded LRU cache.

pub mod api;
pub mod cache;
pub mod error;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, RawQuery, Request, State};
use axum::http::header::{CONTENT_TYPE, ETAG, IF_NONE_MATCH};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use cnnslicer_core::store::Catalog;
use cnnslicer_core::Error;
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::api::{json, unknown_route, Params, RunSummary, View};
use crate::cache::{CachedBody, ResponseCache};
pub use crate::error::ApiError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_CACHE_MB: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    pub data_root: PathBuf,
    pub cache_mb: usize,
    /// Worker threads for request handling and analysis; 0 = one per core.
    pub threads: usize,
    /// Origins allowed by CORS; `*` allows any.
    pub cors_origins: Vec<String>,
}

impl ServiceConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_root: data_root.into(),
            cache_mb: DEFAULT_CACHE_MB,
            threads: 0,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    catalog: Arc<Catalog>,
    cache: Arc<ResponseCache>,
    cors: Option<AllowOrigin>,
}

impl AppState {
    pub fn new(catalog: Catalog, cache_bytes: usize) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            cache: Arc::new(ResponseCache::new(cache_bytes)),
            cors: None,
        }
    }

    pub fn with_cors_origins(mut self, origins: &[String]) -> Result<Self, Error> {
        if origins.is_empty() {
            self.cors = None;
        } else if origins.iter().any(|o| o == "*") {
            self.cors = Some(AllowOrigin::any());
        } else {
            let values = origins
                .iter()
                .map(|o| HeaderValue::from_str(o).map_err(|_| Error::InvalidArgument(format!("bad CORS origin {o:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            self.cors = Some(AllowOrigin::list(values));
        }
        Ok(self)
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

pub fn router(state: AppState) -> Router {
    let cors = state.cors.clone();
    let router = Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(manifest))
        .route("/api/runs/{id}/{view}", get(run_view))
        .fallback(fallback)
        .with_state(state);
    match cors {
        Some(origins) => router.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods([Method::GET])
                .allow_headers([IF_NONE_MATCH])
                .expose_headers([ETAG]),
        ),
        None => router,
    }
}

async fn fallback(request: Request) -> Response {
    unknown_route(request.uri().path()).into_response()
}

async fn list_runs(State(state): State<AppState>, RawQuery(raw): RawQuery, headers: HeaderMap) -> Response {
    if let Err(e) = Params::parse(raw.as_deref()).and_then(|p| View::parse("", &p).map(|_| ())) {
        return e.into_response();
    }
    let runs: Vec<RunSummary> = state.catalog.runs().map(|r| RunSummary::of(r)).collect();
    let fingerprint: String = runs.iter().map(|r| format!("{}={};", r.run_id, r.fingerprint)).collect();
    respond(&state, &headers, "runs".to_string(), &fingerprint, move || json(&runs)).await
}

async fn manifest(
    State(state): State<AppState>,
    Path(id): Path<String>,
    RawQuery(raw): RawQuery,
    headers: HeaderMap,
) -> Response {
    view_response(state, id, String::new(), raw, headers).await
}

async fn run_view(
    State(state): State<AppState>,
    Path((id, view)): Path<(String, String)>,
    RawQuery(raw): RawQuery,
    headers: HeaderMap,
) -> Response {
    view_response(state, id, view, raw, headers).await
}

async fn view_response(state: AppState, id: String, name: String, raw: Option<String>, headers: HeaderMap) -> Response {
    let parsed = Params::parse(raw.as_deref()).and_then(|p| View::parse(&name, &p));
    let view = match parsed {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    let run = match state.catalog.get(&id) {
        Ok(run) => run,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let key = format!("{id}/{}", view.canonical());
    let fingerprint = run.fingerprint().to_string();
    respond(&state, &headers, key, &fingerprint, move || view.compute(&run)).await
}

/// Strong ETag for a canonical query under a given data fingerprint.
pub fn etag_for(canonical: &str, fingerprint: &str) -> String {
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update([0u8]);
    h.update(fingerprint.as_bytes());
    format!("\"{}\"", hex::encode(h.finalize()))
}

fn not_modified(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(|t| t.trim().trim_start_matches("W/"))
        .any(|t| t == "*" || t == etag)
}

async fn respond<F>(state: &AppState, headers: &HeaderMap, key: String, fingerprint: &str, compute: F) -> Response
where
    F: FnOnce() -> cnnslicer_core::Result<CachedBody> + Send + 'static,
{
    let etag = etag_for(&key, fingerprint);
    if not_modified(headers, &etag) {
        return (StatusCode::NOT_MODIFIED, [(ETAG, etag)]).into_response();
    }
    if let Some(hit) = state.cache.get(&key) {
        return ok(hit, etag);
    }
    match tokio::task::spawn_blocking(compute).await {
        Ok(Ok(body)) => {
            state.cache.insert(key, body.clone());
            ok(body, etag)
        }
        Ok(Err(e)) => ApiError::from(e).into_response(),
        Err(e) => ApiError::internal(format!("analysis task failed: {e}")).into_response(),
    }
}

fn ok(body: CachedBody, etag: String) -> Response {
    (StatusCode::OK, [(CONTENT_TYPE, body.content_type.to_string()), (ETAG, etag)], body.body).into_response()
}

/// Opens the catalog and serves until the process is stopped. Sizes the
/// global rayon pool from `threads`.
pub fn run(config: &ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let threads = match config.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    // Already built when embedded in a process that configured it first.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let (catalog, failures) = Catalog::open(&config.data_root)?;
    for (dir, e) in &failures {
        tracing::warn!(dir = %dir.display(), code = e.code(), "skipping run: {e}");
    }
    tracing::info!(runs = catalog.runs().count(), root = %config.data_root.display(), "catalog loaded");
    let state = AppState::new(catalog, config.cache_mb.saturating_mul(1 << 20)).with_cors_origins(&config.cors_origins)?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(threads)
        .max_blocking_threads(threads.max(2))
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(config.host, config.port);
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
