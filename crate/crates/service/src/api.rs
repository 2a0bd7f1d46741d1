use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::Deserialize;
use tinder_core::{BetaPolicy, CovarianceMode, FitConfig, Session, SessionState};
use tokio::sync::OwnedRwLockWriteGuard;

use crate::error::{ApiError, ApiResult};
use crate::store::{SessionHandle, Store};
use crate::views::*;
use crate::AppState;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn find_session(store: &Store, id: &str) -> ApiResult<SessionHandle> {
    store.session(id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
}

/// Mutations never queue: a second mutation while one is running is a
/// conflict the client may retry.
fn lock_for_mutation(handle: SessionHandle, id: &str) -> ApiResult<OwnedRwLockWriteGuard<Session>> {
    handle
        .try_write_owned()
        .map_err(|_| ApiError::conflict(format!("session {id} is busy with another request")))
}

pub async fn health() -> &'static str {
    "ok"
}

pub async fn upload_dataset(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let store = app.store.clone();
    let (stored, created) = blocking(move || Ok(store.add_dataset(&body)?)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(dataset_info(&stored.reference.sha256, &stored.data))))
}

fn dataset_info(id: &str, data: &tinder_core::Data) -> DatasetInfo {
    DatasetInfo { dataset_id: id.to_string(), n: data.n(), d: data.d(), has_labels: data.labels().is_some() }
}

pub async fn get_dataset(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetInfo>> {
    let stored = app.store.dataset(&id).ok_or_else(|| ApiError::not_found(format!("unknown dataset {id}")))?;
    Ok(Json(dataset_info(&id, &stored.data)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BetaInput {
    Number(f64),
    Text(String),
}

impl Default for BetaInput {
    fn default() -> Self {
        Self::Number(1.0)
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    pub k: i64,
    #[serde(default)]
    pub beta: BetaInput,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    pub restarts: Option<usize>,
}

impl CreateSession {
    fn config(&self) -> ApiResult<FitConfig> {
        let invalid = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
        let k = usize::try_from(self.k).map_err(|_| invalid(format!("k must be at least 1, got {}", self.k)))?;
        let beta = match &self.beta {
            BetaInput::Number(b) => BetaPolicy::Fixed(*b),
            BetaInput::Text(s) => s.parse().map_err(|e: tinder_core::TinderError| invalid(e.to_string()))?,
        };
        let mut config = FitConfig::new(k).with_beta(beta).with_seed(self.seed).with_covariance_mode(self.covariance_mode);
        if let Some(r) = self.restarts {
            config = config.with_restarts(r);
        }
        tinder_core::session::validate_session_config(&config)?;
        Ok(config)
    }
}

pub async fn create_session(
    State(app): State<AppState>,
    Json(request): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<Started>)> {
    let dataset = app
        .store
        .dataset(&request.dataset_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset {}", request.dataset_id)))?;
    let config = request.config()?;
    let store = app.store.clone();
    let top = app.top_members;
    let started = blocking(move || {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = SessionState::start(id, dataset.data.clone(), dataset.reference.clone(), config)?;
        let clusters = cluster_summaries(session.current(), &dataset.data, top, MemberOrder::default())?;
        let started = Started { session_id: session.session_id().to_string(), iteration: 0, clusters };
        store.insert_session(session)?;
        Ok(started)
    })
    .await?;
    tracing::info!(session = %started.session_id, "session started");
    Ok((StatusCode::CREATED, Json(started)))
}

pub async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionInfo>> {
    let mut out = Vec::new();
    for id in app.store.session_ids() {
        if let Some(handle) = app.store.session(&id) {
            out.push(SessionInfo::of(&*handle.read().await));
        }
    }
    Json(out)
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let handle = find_session(&app.store, &id)?;
    let session = handle.read().await;
    Ok(Json(SessionInfo::of(&session)))
}

pub async fn reject(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Rejected>> {
    let guard = lock_for_mutation(find_session(&app.store, &id)?, &id)?;
    let store = app.store.clone();
    let top = app.top_members;
    let rejected = blocking(move || {
        let mut session = guard;
        session.reject()?;
        store.persist(&session)?;
        let report = session.diversity_report()?;
        let entry = session.current();
        let t = entry.iteration;
        Ok(Rejected {
            iteration: t,
            clusters: cluster_summaries(entry, session.data(), top, MemberOrder::default())?,
            diversity: Diversity {
                ars_to_previous: report.ars_to_previous[t].unwrap_or(1.0),
                ars_max_pairwise: report.max_pairwise_ars(),
                novel: session.latest_is_novel()?,
            },
        })
    })
    .await?;
    tracing::info!(session = %id, iteration = rejected.iteration, "rejected");
    Ok(Json(rejected))
}

pub async fn accept(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Accepted>> {
    let mut session = lock_for_mutation(find_session(&app.store, &id)?, &id)?;
    session.accept()?;
    let store = app.store.clone();
    let accepted = Accepted { status: session.status(), iteration: session.current().iteration };
    blocking(move || Ok(store.persist(&session)?)).await?;
    Ok(Json(accepted))
}

pub async fn history(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<History>> {
    let handle = find_session(&app.store, &id)?;
    let session = handle.read().await;
    Ok(Json(History {
        session: SessionInfo::of(&session),
        report: session.diversity_report()?,
        iterations: session.history().entries().iter().map(IterationMetrics::from).collect(),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct ClusteringQuery {
    #[serde(default)]
    pub soft: bool,
    #[serde(default)]
    pub order: MemberOrder,
}

pub async fn clustering(
    State(app): State<AppState>,
    Path((id, t)): Path<(String, usize)>,
    Query(query): Query<ClusteringQuery>,
) -> ApiResult<Json<Clustering>> {
    let handle = find_session(&app.store, &id)?;
    let session = handle.read().await;
    let entry = session
        .history()
        .get(t)
        .ok_or_else(|| ApiError::not_found(format!("session {id} has no iteration {t}")))?;
    let responsibilities = query
        .soft
        .then(|| entry.assignment.resp().rows().into_iter().map(|r| r.to_vec()).collect());
    Ok(Json(Clustering {
        iteration: t,
        labels: entry.hard().labels().to_vec(),
        responsibilities,
        clusters: cluster_summaries(entry, session.data(), app.top_members, query.order)?,
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct PointsQuery {
    pub t: Option<usize>,
}

pub async fn points_of(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<PointsQuery>,
) -> ApiResult<Json<Vec<Point>>> {
    let handle = find_session(&app.store, &id)?;
    let session = handle.read().await;
    let t = query.t.unwrap_or(session.current().iteration);
    let entry = session
        .history()
        .get(t)
        .ok_or_else(|| ApiError::not_found(format!("session {id} has no iteration {t}")))?;
    Ok(Json(points(entry, session.data())))
}

