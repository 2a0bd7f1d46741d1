//! HTTP session service for interactive rejection clustering.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/datasets` | CSV body; content-addressed, idempotent |
//! | GET | `/datasets/{id}` | |
//! | POST | `/sessions` | `{dataset_id, k, beta: number or "auto", seed}` |
//! | GET | `/sessions`, `/sessions/{id}` | |
//! | POST | `/sessions/{id}/reject` | synchronous re-fit |
//! | POST | `/sessions/{id}/accept` | |
//! | GET | `/sessions/{id}/history` | diversity report and per-iteration metrics |
//! | GET | `/sessions/{id}/clusterings/{t}?soft=true&order=density` | |
//! | GET | `/sessions/{id}/points?t=T` | first two coordinates and hard label |
//!
//! Mutations on one session are serialized: a mutation that arrives while
//! another is running gets `409 Conflict`. Every mutation is written to the
//! data directory before the response is sent, and the store reloads all
//! sessions when opened again.

pub mod api;
pub mod error;
pub mod store;
pub mod views;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::{ApiError, ServiceError};
pub use store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
    pub top_members: usize,
    pub max_upload_bytes: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            cors_origin: None,
            top_members: views::TOP_MEMBERS,
            max_upload_bytes: 256 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub top_members: usize,
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let origin = match config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(value)) => AllowOrigin::exact(value),
        _ => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/health", get(api::health))
        .route("/datasets", post(api::upload_dataset))
        .route("/datasets/{id}", get(api::get_dataset))
        .route("/sessions", post(api::create_session).get(api::list_sessions))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/reject", post(api::reject))
        .route("/sessions/{id}/accept", post(api::accept))
        .route("/sessions/{id}/history", get(api::history))
        .route("/sessions/{id}/clusterings/{t}", get(api::clustering))
        .route("/sessions/{id}/points", get(api::points_of))
        .layer(DefaultBodyLimit::max(config.max_upload_bytes))
        .layer(cors)
        .with_state(state)
}

/// A bound, not yet running service.
pub struct Service {
    state: AppState,
    router: Router,
    listener: TcpListener,
}

impl Service {
    /// Opens the data directory and binds `addr` (port 0 picks a free port).
    pub async fn bind(config: ServiceConfig, addr: &str) -> Result<Self, ServiceError> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let state = AppState { store, top_members: config.top_members };
        let router = router(state.clone(), &config);
        let listener = TcpListener::bind(addr).await?;
        Ok(Self { state, router, listener })
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.state.store
    }

    /// Serves until `shutdown` resolves, then persists every session.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<usize, ServiceError> {
        axum::serve(self.listener, self.router).with_graceful_shutdown(shutdown).await?;
        Ok(self.state.store.persist_all().await?)
    }
}
