//! HTTP API of the calibration session.

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use pointbim::calibration::{Session, Stage};
use pointbim::error::Error;
use pointbim::pipeline::RunOptions;

pub type SharedSession = Arc<Mutex<Session>>;

/// Error body: `{"error": message, "fields": [{field, message}]}`.
pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Params(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
        Error::Prerequisite { .. } => StatusCode::CONFLICT,
        Error::UnknownStage(_) => StatusCode::NOT_FOUND,
        Error::Stage { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let fields = match &self.0 {
            Error::Params(f) => json!(f),
            _ => json!([]),
        };
        let body = json!({ "error": self.0.to_string(), "fields": fields });
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs `f` on the session outside the async executor.
async fn with_session<T: Send + 'static>(
    s: SharedSession,
    f: impl FnOnce(&mut Session) -> pointbim::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || {
        let mut guard = s.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(Error::InvalidInput(format!("worker failed: {e}"))))?
    .map_err(ApiError)
}

async fn session_info(State(s): State<SharedSession>) -> ApiResult<Json<Value>> {
    let info = with_session(s, |s| Ok(s.info())).await?;
    Ok(Json(json!(info)))
}

async fn put_params(State(s): State<SharedSession>, Json(patch): Json<Value>) -> ApiResult<Json<Value>> {
    let cfg = with_session(s, move |s| s.update_params(&patch).cloned()).await?;
    Ok(Json(json!(cfg)))
}

async fn run_stage(State(s): State<SharedSession>, Path(stage): Path<String>) -> ApiResult<Json<Value>> {
    let stage: Stage = stage.parse()?;
    let report = with_session(s, move |s| s.run_stage(stage)).await?;
    Ok(Json(json!(report)))
}

async fn preview(State(s): State<SharedSession>, Path(file): Path<String>) -> Response {
    let Some(id) = file.strip_suffix(".png").map(str::to_string) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let png = with_session(s, move |s| Ok(s.preview(&id).map(<[u8]>::to_vec))).await;
    match png {
        Ok(Some(bytes)) => ([(header::CONTENT_TYPE, "image/png")], Body::from(bytes)).into_response(),
        Ok(None) => (StatusCode::NOT_FOUND, Json(json!({"error": "no such preview", "fields": []}))).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExportRequest {
    seed: Option<u64>,
    deterministic: Option<bool>,
}

async fn export(State(s): State<SharedSession>, body: Option<Json<ExportRequest>>) -> ApiResult<Json<Value>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let opts = RunOptions {
        seed: req.seed,
        deterministic: req.deterministic.unwrap_or(true),
        ..RunOptions::default()
    };
    let out = with_session(s, move |s| s.export(&opts)).await?;
    Ok(Json(json!(out)))
}

pub fn router(session: SharedSession) -> Router {
    Router::new()
        .route("/api/session", get(session_info))
        .route("/api/params", put(put_params))
        .route("/api/stage/{stage}/run", post(run_stage))
        .route("/api/preview/{file}", get(preview))
        .route("/api/export", post(export))
        .with_state(session)
}

/// Serves on 127.0.0.1 until the process is stopped.
pub async fn serve(session: Session, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("calibration server on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Mutex::new(session)))).await
}
