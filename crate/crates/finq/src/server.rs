//! HTTP service over one immutable model.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finq_core::applications::{generate_scenario, nowcast, sample_synthetic, ScenarioRequest};
use finq_core::ndmath::Rng;
use finq_core::pipeline::FinqModel;
use finq_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::wire::{
    to_moves, DecomposeRequest, DecompositionBody, Health, ModelMeta, NowcastRequest, SampleRequest,
    SamplesBody, ScenarioBody, ScenarioRequestBody,
};

pub const DEFAULT_BODY_LIMIT: usize = 1 << 20;
/// Upper bound on curves produced by one `/sample` call.
pub const MAX_SAMPLES_PER_REQUEST: usize = 100_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub model_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub body_limit: usize,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest { message: String, path: String },
    Unprocessable(String),
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension { .. }
            | Error::NonFinite(_)
            | Error::InvalidConfig(_)
            | Error::MissingTenors(_)
            | Error::NotAnAnchor { .. }
            | Error::OutOfRange(_)
            | Error::TenorLabel(_) => ApiError::Unprocessable(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = match self {
            ApiError::BadRequest { message, path } => json!({ "error": message, "path": path }),
            ApiError::Unprocessable(message) => json!({ "error": message }),
            ApiError::Internal(message) => {
                let id = uuid::Uuid::new_v4().to_string();
                log::error!("request failed [{id}]: {message}");
                json!({ "error": "internal error", "diagnostic_id": id })
            }
        };
        (status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::BadRequest {
            message: e.into_inner().to_string(),
            path,
        }
    })
}

/// Runs CPU-bound work off the async executor.
async fn compute<T, F>(f: F) -> Result<Json<T>, ApiError>
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
        .map(Json)
}

type Shared = Arc<FinqModel>;

async fn health() -> Json<Health> {
    Json(Health::default())
}

async fn meta(State(model): State<Shared>) -> Json<ModelMeta> {
    Json(ModelMeta::of(&model))
}

async fn decompose(State(model): State<Shared>, body: Bytes) -> Result<Json<DecompositionBody>, ApiError> {
    let req: DecomposeRequest = parse(&body)?;
    compute(move || {
        let x = req.curve.to_object(model.grid())?;
        Ok(DecompositionBody::of(&model.decompose(&x)?)?)
    })
    .await
}

async fn scenario(State(model): State<Shared>, body: Bytes) -> Result<Json<ScenarioBody>, ApiError> {
    let req: ScenarioRequestBody = parse(&body)?;
    compute(move || {
        let request = ScenarioRequest {
            current: req.curve.to_object(model.grid())?,
            moves: to_moves(&req.moves)?,
            level: req.level,
        };
        Ok(ScenarioBody::of(&generate_scenario(&model, &request, None)?)?)
    })
    .await
}

async fn sample(State(model): State<Shared>, body: Bytes) -> Result<Json<SamplesBody>, ApiError> {
    let req: SampleRequest = parse(&body)?;
    compute(move || {
        let spec = req.resolve(&model)?;
        if spec.count > MAX_SAMPLES_PER_REQUEST {
            return Err(ApiError::Unprocessable(format!(
                "at most {MAX_SAMPLES_PER_REQUEST} samples per request"
            )));
        }
        let samples = sample_synthetic(&model, &spec, &mut Rng::new(req.seed))?;
        Ok(SamplesBody::of(model.grid(), &samples))
    })
    .await
}

async fn nowcast_handler(State(model): State<Shared>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: NowcastRequest = parse(&body)?;
    compute(move || {
        let r = nowcast(&model, &req.partial, req.date)?;
        serde_json::to_value(&r).map_err(|e| ApiError::Internal(e.to_string()))
    })
    .await
}

pub fn router(model: Arc<FinqModel>, static_dir: Option<PathBuf>, body_limit: usize) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/model/meta", get(meta))
        .route("/decompose", post(decompose))
        .route("/scenario", post(scenario))
        .route("/sample", post(sample))
        .route("/nowcast", post(nowcast_handler))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(model);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { (StatusCode::NOT_FOUND, Json(json!({ "error": "no such endpoint" }))) }),
    }
}

pub async fn serve(config: ServiceConfig) -> Result<(), Box<dyn std::error::Error>> {
    let model = Arc::new(finq_core::pipeline::load_model(&config.model_path)?);
    let app = router(model, config.static_dir, config.body_limit);
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
