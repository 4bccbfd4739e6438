//! HTTP service over the batched renderer.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/healthz` | | `{"status":"ok"}` |
//! | POST | `/v1/envs` | `EnvConfig` | `EnvCreated` (201) |
//! | POST | `/v1/envs/{id}/reset` | `ResetRequest` | `Observation` |
//! | POST | `/v1/envs/{id}/step` | `StepRequest` | `StepResponse` |
//! | GET | `/v1/envs/{id}/stats` | | `EnvStats` |
//! | DELETE | `/v1/envs/{id}` | | 204, also when already gone |
//! | POST | `/v1/render` | `RenderRequest` | `RenderResponse` |
//! | POST | `/v1/layout` | `LayoutRequest` | `TileLayout` |
//! | POST | `/v1/bench` | `BenchConfig` | `BenchReport` |
//!
//! Errors are `ErrorBody` JSON. Rendering and stepping run on the blocking
//! pool; each environment is locked for the duration of a call.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use batchrender::bench::{InProcessLauncher, ProcessLauncher, WorkerLauncher};
use batchrender::wire::{
    EnvCreated, EnvStats, ErrorBody, LayoutRequest, Observation, RenderRequest, RenderResponse, ResetRequest,
    StepRequest, StepResponse,
};
use batchrender::{
    make_cartpole_env, plan_layout, BenchConfig, BenchReport, CartPoleEnv, EnvConfig, Error, FrameBatch, SoftRenderer,
    TileLayout,
};

/// How the bench endpoint runs worker shards.
#[derive(Debug, Clone)]
pub enum WorkerMode {
    InProcess,
    /// Spawn `program args...` per shard (see `batchrender::bench::worker_main`).
    Process { program: PathBuf, args: Vec<String> },
}

type SharedEnv = Arc<Mutex<CartPoleEnv>>;

pub struct AppState {
    envs: Mutex<HashMap<String, SharedEnv>>,
    workers: WorkerMode,
}

impl AppState {
    pub fn new(workers: WorkerMode) -> Arc<Self> {
        Arc::new(AppState {
            envs: Mutex::new(HashMap::new()),
            workers,
        })
    }

    fn env(&self, id: &str) -> Result<SharedEnv, ApiError> {
        self.envs
            .lock()
            .expect("env table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn env_count(&self) -> usize {
        self.envs.lock().expect("env table poisoned").len()
    }
}

#[derive(Debug)]
pub enum ApiError {
    Core(Error),
    NotFound(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            ApiError::Core(e) => {
                let body = ErrorBody::from(e);
                let status = match body.kind.as_str() {
                    "backend_unavailable" | "device_resident_unsupported" => StatusCode::SERVICE_UNAVAILABLE,
                    "io" | "worker" => StatusCode::INTERNAL_SERVER_ERROR,
                    _ => StatusCode::BAD_REQUEST,
                };
                (status, body)
            }
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                ErrorBody {
                    kind: "not_found".into(),
                    message: format!("no environment {id}"),
                },
            ),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody {
                    kind: "internal".into(),
                    message: m.clone(),
                },
            ),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn lock(env: &SharedEnv) -> std::sync::MutexGuard<'_, CartPoleEnv> {
    // A panic mid-step leaves the env usable; its next reset restores it.
    env.lock().unwrap_or_else(|p| p.into_inner())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn create_env(
    State(app): State<Arc<AppState>>,
    Json(config): Json<EnvConfig>,
) -> Result<(StatusCode, Json<EnvCreated>), ApiError> {
    let env = blocking(move || Ok(make_cartpole_env(&config)?)).await?;
    let id = uuid::Uuid::new_v4().to_string();
    let created = EnvCreated {
        id: id.clone(),
        observation_shape: env.observation_shape(),
        layout: *env.layout(),
    };
    app.envs
        .lock()
        .expect("env table poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(env)));
    tracing::info!(%id, "environment created");
    Ok((StatusCode::CREATED, Json(created)))
}

async fn reset_env(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ResetRequest>,
) -> ApiResult<Observation> {
    let env = app.env(&id)?;
    blocking(move || Ok(Json(Observation::from(lock(&env).reset(req.seed)?)))).await
}

async fn step_env(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<StepRequest>,
) -> ApiResult<StepResponse> {
    let env = app.env(&id)?;
    blocking(move || {
        let mut env = lock(&env);
        let r = env.step(&req.actions)?;
        Ok(Json(StepResponse {
            observations: r.observations.into(),
            checksum: r.observations.checksum(),
            rewards: r.rewards,
            dones: r.dones,
        }))
    })
    .await
}

async fn env_stats(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<EnvStats> {
    let env = app.env(&id)?;
    let env = lock(&env);
    Ok(Json(EnvStats {
        stats: env.renderer_stats(),
        episodes: env.episodes().to_vec(),
    }))
}

async fn delete_env(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> StatusCode {
    if app.envs.lock().expect("env table poisoned").remove(&id).is_some() {
        tracing::info!(%id, "environment deleted");
    }
    StatusCode::NO_CONTENT
}

async fn render(Json(req): Json<RenderRequest>) -> ApiResult<RenderResponse> {
    blocking(move || {
        let state = req.to_batch()?;
        let layout = TileLayout::new(req.scenes, req.width, req.height)?;
        let mut frames = FrameBatch::zeroed(req.scenes, req.width, req.height);
        let stats = SoftRenderer::new().render_frames_into(&state, &layout, &req.shading, req.path, &mut frames)?;
        Ok(Json(RenderResponse {
            frames: (&frames).into(),
            checksum: frames.checksum(),
            stats,
            layout,
        }))
    })
    .await
}

async fn layout(Json(req): Json<LayoutRequest>) -> ApiResult<TileLayout> {
    Ok(Json(plan_layout(req.scenes, req.width, req.height, req.max_atlas_dim)?))
}

async fn bench(State(app): State<Arc<AppState>>, Json(config): Json<BenchConfig>) -> ApiResult<BenchReport> {
    config.validate()?;
    let mode = app.workers.clone();
    blocking(move || {
        let launcher: Box<dyn WorkerLauncher> = match mode {
            WorkerMode::InProcess => Box::new(InProcessLauncher),
            WorkerMode::Process { program, args } => Box::new(ProcessLauncher::new(program, args)),
        };
        Ok(Json(batchrender::run_benchmark(&config, launcher.as_ref())?))
    })
    .await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/envs", post(create_env))
        .route("/v1/envs/{id}", axum::routing::delete(delete_env))
        .route("/v1/envs/{id}/reset", post(reset_env))
        .route("/v1/envs/{id}/step", post(step_env))
        .route("/v1/envs/{id}/stats", get(env_stats))
        .route("/v1/render", post(render))
        .route("/v1/layout", post(layout))
        .route("/v1/bench", post(bench))
        .with_state(state)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
