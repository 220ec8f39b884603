//! Control API over an audit store: list runs, read state and audit pages,
//! list pending checkpoints, validate edits, and post decisions.
//!
//! Posting a decision is the only mutation. An accepted approve or edit
//! schedules a resume of the run on the blocking pool; decisions and resumes
//! for one run are serialized by a per-run lock.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use leash_core::codec::{parse_contract, Artifact};
use leash_core::orchestrator::{
    pending_checkpoints, AuditEvent, CheckpointView, Decision, Orchestrator, OrchestratorError, RunState, RunStatus,
    StageStatus, Verdict,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_AUDIT_PAGE: usize = 100;
pub const MAX_AUDIT_PAGE: usize = 1000;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
    resume_after_decision: bool,
}

struct Inner {
    orch: Orchestrator,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    in_flight: AtomicUsize,
}

impl AppState {
    pub fn new(orch: Orchestrator) -> Self {
        Self {
            inner: Arc::new(Inner {
                orch,
                locks: Mutex::new(HashMap::new()),
                in_flight: AtomicUsize::new(0),
            }),
            resume_after_decision: true,
        }
    }

    /// With `false`, decisions are recorded only; runs continue when resumed elsewhere.
    pub fn resume_after_decision(mut self, on: bool) -> Self {
        self.resume_after_decision = on;
        self
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.inner.orch
    }

    fn run_lock(&self, run_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.inner.locks.lock().expect("lock table");
        locks.entry(run_id.to_string()).or_default().clone()
    }

    /// Background resumes still running.
    pub fn in_flight(&self) -> usize {
        self.inner.in_flight.load(Ordering::SeqCst)
    }

    /// Waits until every scheduled resume has finished.
    pub async fn drain(&self) {
        while self.in_flight() > 0 {
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let status = match e.code() {
            "unknown-run" | "unknown-stage" => StatusCode::NOT_FOUND,
            "not-awaiting" | "digest-mismatch" => StatusCode::CONFLICT,
            "contract-violation" | "edit-requires-artifact" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking store or orchestrator work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/runs", get(list_runs))
        .route("/api/v1/runs/{run_id}", get(get_run))
        .route("/api/v1/runs/{run_id}/audit", get(audit_page))
        .route("/api/v1/runs/{run_id}/decisions", post(post_decision))
        .route(
            "/api/v1/runs/{run_id}/checkpoints/{stage}/validate",
            post(validate_edit),
        )
        .route("/api/v1/checkpoints", get(list_checkpoints))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then waits for scheduled resumes.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    state.drain().await;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<RunStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub stage_states: BTreeMap<String, StageStatus>,
    pub events: u64,
    /// Set when the trail could not be folded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn list_runs(State(s): State<AppState>) -> ApiResult<Vec<RunSummary>> {
    blocking(move || {
        let orch = s.orchestrator();
        let mut out = Vec::new();
        for run_id in orch.store().list_runs()? {
            out.push(match orch.state(&run_id) {
                Ok(st) => RunSummary {
                    run_id,
                    status: Some(st.status),
                    parent: st.parent,
                    stage_states: st.stage_states,
                    events: st.clock,
                    error: None,
                },
                Err(e) => RunSummary {
                    run_id,
                    status: None,
                    parent: None,
                    stage_states: BTreeMap::new(),
                    events: 0,
                    error: Some(e.to_string()),
                },
            });
        }
        Ok(Json(out))
    })
    .await
}

#[derive(Debug, Serialize)]
pub struct RunDetail {
    #[serde(flatten)]
    pub state: RunState,
    /// The open checkpoint, when the run is halted at one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<CheckpointView>,
}

fn detail(state: RunState) -> RunDetail {
    let checkpoint = match &state.status {
        RunStatus::AwaitingApproval { stage } => Some(CheckpointView::of(&state, stage)),
        _ => None,
    };
    RunDetail { state, checkpoint }
}

async fn get_run(State(s): State<AppState>, Path(run_id): Path<String>) -> ApiResult<RunDetail> {
    blocking(move || Ok(Json(detail(s.orchestrator().state(&run_id)?)))).await
}

async fn list_checkpoints(State(s): State<AppState>) -> ApiResult<Vec<CheckpointView>> {
    blocking(move || Ok(Json(pending_checkpoints(s.orchestrator().store())?))).await
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct AuditPage {
    pub run_id: String,
    pub total: usize,
    pub offset: usize,
    pub events: Vec<AuditEvent>,
}

async fn audit_page(
    State(s): State<AppState>,
    Path(run_id): Path<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<AuditPage> {
    blocking(move || {
        let events = s.orchestrator().store().read(&run_id)?;
        let offset = q.offset.unwrap_or(0).min(events.len());
        let limit = q.limit.unwrap_or(DEFAULT_AUDIT_PAGE).clamp(1, MAX_AUDIT_PAGE);
        let total = events.len();
        let events = events.into_iter().skip(offset).take(limit).collect();
        Ok(Json(AuditPage {
            run_id,
            total,
            offset,
            events,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct EditCandidate {
    pub artifact: String,
}

#[derive(Debug, Serialize)]
pub struct EditCheck {
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

/// Parses a candidate edit against the stage contract without recording anything.
async fn validate_edit(
    State(s): State<AppState>,
    Path((run_id, stage)): Path<(String, String)>,
    Json(body): Json<EditCandidate>,
) -> Result<(StatusCode, Json<EditCheck>), ApiError> {
    blocking(move || {
        let state = s.orchestrator().state(&run_id)?;
        let contract = state
            .spec()
            .stage(&stage)
            .ok_or_else(|| OrchestratorError::UnknownStage { stage: stage.clone() })?
            .contract
            .clone();
        Ok(match parse_contract(&body.artifact, &contract) {
            Ok(a) => (
                StatusCode::OK,
                Json(EditCheck {
                    valid: true,
                    artifact: Some(a),
                    error: None,
                }),
            ),
            Err(e) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(EditCheck {
                    valid: false,
                    artifact: None,
                    error: Some(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())),
                }),
            ),
        })
    })
    .await
}

#[derive(Debug, Serialize)]
pub struct DecisionAccepted {
    pub run_id: String,
    pub status: RunStatus,
    /// True when a resume was scheduled in the background.
    pub resuming: bool,
}

async fn post_decision(
    State(s): State<AppState>,
    Path(run_id): Path<String>,
    Json(decision): Json<Decision>,
) -> ApiResult<DecisionAccepted> {
    let lock = s.run_lock(&run_id);
    let s2 = s.clone();
    let id = run_id.clone();
    let continues = decision.verdict != Verdict::Reject;
    let state = blocking(move || {
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        Ok(s2.orchestrator().resolve_checkpoint(&id, decision)?)
    })
    .await?;
    let resuming = continues && s.resume_after_decision && state.status == RunStatus::Running;
    if resuming {
        schedule_resume(&s, run_id.clone());
    }
    Ok(Json(DecisionAccepted {
        run_id,
        status: state.status,
        resuming,
    }))
}

fn schedule_resume(s: &AppState, run_id: String) {
    let s = s.clone();
    s.inner.in_flight.fetch_add(1, Ordering::SeqCst);
    tokio::task::spawn_blocking(move || {
        let lock = s.run_lock(&run_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        match s.orchestrator().resume(&run_id, None) {
            Ok(st) => tracing::info!(run_id, status = ?st.status, "resumed after decision"),
            Err(e) => tracing::warn!(run_id, code = e.code(), "resume after decision failed: {e}"),
        }
        s.inner.in_flight.fetch_sub(1, Ordering::SeqCst);
    });
}
