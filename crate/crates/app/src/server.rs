//! Annotation HTTP API.
//!
//! Annotator routes (`next-task`, `submissions`, `progress`) never carry
//! condition labels or shuffle maps. Admin routes need
//! `Authorization: Bearer <token>`, where the token comes from the
//! environment variable named in the server config; they are disabled when
//! that variable is unset.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::thread;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mathqa_core::campaign::{
    create_campaign, Acknowledgment, CampaignConfig, CampaignError, CampaignStore, FieldError, Progress,
    SubmissionPayload, TaskView,
};
use mathqa_core::generation::RunArtifact;
use mathqa_core::metrics::MetricTable;
use mathqa_core::stats::{analyze, AnalysisOptions, AnalysisReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use crate::artifacts::Layout;
use crate::config::{derive_seed, AppConfig};

/// Shared by every request. Holds the admin token value in memory only.
pub struct ServerState {
    pub store: CampaignStore,
    pub admin_token: Option<String>,
    /// Run artifact that admin-created campaigns are built from.
    pub run_path: Option<PathBuf>,
    /// Metric table joined into admin reports when present.
    pub metrics_path: Option<PathBuf>,
    pub campaign_defaults: CampaignConfig,
    /// Root seed; campaign seeds derive from it as in the CLI.
    pub seed: u64,
    pub analysis: AnalysisOptions,
}

impl ServerState {
    pub fn new(store: CampaignStore) -> Self {
        Self {
            store,
            admin_token: None,
            run_path: None,
            metrics_path: None,
            campaign_defaults: CampaignConfig::default(),
            seed: 0,
            analysis: AnalysisOptions::default(),
        }
    }

    /// Opens the campaign store under the configured data directory and
    /// reads the admin token from the configured environment variable.
    pub fn from_config(cfg: &AppConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, CampaignError> {
        let layout = Layout::new(cfg.data_dir.clone());
        Ok(Self {
            store: CampaignStore::open(layout.campaigns())?,
            admin_token: env(&cfg.server.admin_token_env).filter(|t| !t.is_empty()),
            run_path: Some(layout.run()),
            metrics_path: Some(layout.scores()),
            campaign_defaults: cfg.campaign.clone(),
            seed: cfg.seed,
            analysis: AnalysisOptions {
                seed: cfg.stage_seed("analyze"),
                ..AnalysisOptions::default()
            },
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": error, "message": message.into() }),
        }
    }

    fn with_fields(status: StatusCode, error: &str, message: impl Into<String>, fields: &[FieldError]) -> Self {
        let mut e = Self::new(status, error, message);
        e.body["errors"] = json!(fields);
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        let message = e.to_string();
        match e {
            CampaignError::Validation { errors } => {
                Self::with_fields(StatusCode::UNPROCESSABLE_ENTITY, "validation", message, &errors)
            }
            CampaignError::Duplicate { .. } => Self::new(StatusCode::CONFLICT, "duplicate", message),
            CampaignError::CampaignExists(_) => Self::new(StatusCode::CONFLICT, "exists", message),
            CampaignError::UnknownCampaign(_) | CampaignError::UnknownTask(_) | CampaignError::UnknownAnnotator(_) => {
                Self::new(StatusCode::NOT_FOUND, "not-found", message)
            }
            CampaignError::NotAssigned { .. } => Self::new(StatusCode::FORBIDDEN, "not-assigned", message),
            CampaignError::MissingConditions { .. } | CampaignError::Config(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-campaign", message)
            }
            CampaignError::Parse { .. } | CampaignError::Io(_) | CampaignError::Csv(_) => {
                log::error!("campaign storage: {message}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "campaign storage failed")
            }
        }
    }
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." || path == "?" {
            "body".to_string()
        } else {
            path
        };
        ApiError::with_fields(
            StatusCode::BAD_REQUEST,
            "malformed",
            "request body could not be parsed",
            &[FieldError {
                field,
                message: e.inner().to_string(),
            }],
        )
    })
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn require_admin(state: &ServerState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.admin_token else {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "admin-disabled",
            "admin routes are disabled",
        ));
    };
    let given = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match given {
        Some(token) if constant_time_eq(token.as_bytes(), expected.as_bytes()) => Ok(()),
        _ => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong admin token",
        )),
    }
}

type AppState = State<Arc<ServerState>>;

async fn health(State(state): AppState) -> Json<Value> {
    Json(json!({ "status": "ok", "campaigns": state.store.ids().len() }))
}

/// `null` when the annotator has nothing left.
async fn next_task(
    State(state): AppState,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Option<TaskView>>, ApiError> {
    let annotator = params
        .get("annotator")
        .map(|a| a.trim())
        .filter(|a| !a.is_empty())
        .ok_or_else(|| {
            ApiError::with_fields(
                StatusCode::BAD_REQUEST,
                "malformed",
                "annotator query parameter is required",
                &[FieldError {
                    field: "annotator".into(),
                    message: "required".into(),
                }],
            )
        })?;
    Ok(Json(state.store.next_task(&id, annotator)?))
}

async fn submit(State(state): AppState, Path(id): Path<String>, body: Bytes) -> Result<Json<Acknowledgment>, ApiError> {
    let payload: SubmissionPayload = parse_body(&body)?;
    let ack = tokio::task::spawn_blocking(move || state.store.submit(&id, &payload))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ack))
}

#[derive(Debug, Serialize)]
struct ProgressBody {
    #[serde(flatten)]
    progress: Progress,
    percent_complete: f64,
}

async fn progress(State(state): AppState, Path(id): Path<String>) -> Result<Json<ProgressBody>, ApiError> {
    let progress = state.store.progress(&id)?;
    let percent_complete = if progress.total_tasks == 0 {
        100.0
    } else {
        100.0 * progress.submitted as f64 / progress.total_tasks as f64
    };
    Ok(Json(ProgressBody {
        progress,
        percent_complete,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    id: String,
    #[serde(default)]
    config: Option<CampaignConfig>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct CreateResponse {
    id: String,
    tasks: usize,
    survey_sizes: Vec<usize>,
    annotators: Vec<String>,
}

async fn create(
    State(state): AppState,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    require_admin(&state, &headers)?;
    let req: CreateRequest = parse_body(&body)?;
    let run_path = state.run_path.clone().filter(|p| p.exists()).ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no-run",
            "no run artifact is available to build a campaign from",
        )
    })?;
    let created = tokio::task::spawn_blocking(move || -> Result<CreateResponse, ApiError> {
        let run = RunArtifact::load(&run_path).map_err(|e| {
            log::error!("loading {}: {e}", run_path.display());
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "run artifact could not be read",
            )
        })?;
        let config = req.config.unwrap_or_else(|| state.campaign_defaults.clone());
        let seed = req
            .seed
            .unwrap_or_else(|| derive_seed(state.seed, &format!("campaign/{}", req.id)));
        let campaign = create_campaign(&req.id, &run, &config, seed)?;
        let response = CreateResponse {
            id: campaign.id.clone(),
            tasks: campaign.tasks.len(),
            survey_sizes: campaign.surveys.iter().map(Vec::len).collect(),
            annotators: campaign.plan.keys().cloned().collect(),
        };
        state.store.insert(campaign)?;
        log::info!("created campaign {} with {} tasks", response.id, response.tasks);
        Ok(response)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn report(
    State(state): AppState,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<AnalysisReport>, ApiError> {
    require_admin(&state, &headers)?;
    let agg = state.store.aggregate(&id)?;
    let table = state
        .metrics_path
        .as_ref()
        .filter(|p| p.exists())
        .and_then(|p| match MetricTable::load(p) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("ignoring {}: {e}", p.display());
                None
            }
        });
    Ok(Json(analyze(&agg, table.as_ref(), &state.analysis)))
}

pub fn router(state: Arc<ServerState>, static_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/campaigns", post(create))
        .route("/api/campaigns/{id}/next-task", get(next_task))
        .route("/api/campaigns/{id}/submissions", post(submit))
        .route("/api/campaigns/{id}/progress", get(progress))
        .route("/api/campaigns/{id}/report", get(report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A server running on its own thread and runtime. Dropping the handle
/// shuts it down; in-flight requests finish first.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServiceHandle {
    /// Binds `addr` before returning, so a port in use is reported here.
    pub fn start(state: ServerState, addr: &str, static_dir: Option<PathBuf>) -> io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let app = router(Arc::new(state), static_dir.as_deref());
        let (tx, rx) = oneshot::channel::<()>();
        let thread = thread::Builder::new().name("mathqa-http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}
