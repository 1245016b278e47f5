//! JSON-over-HTTP routes for the assistant service.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use labassist_core::assistant::{Assistant, AssistantError, TurnInput, TurnRecord};

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    /// Present when a stage failed: the failed turn as logged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<Box<TurnRecord>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                record: None,
            },
        }
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "SESSION_NOT_FOUND" | "LOG_UNAVAILABLE" => StatusCode::NOT_FOUND,
        "SESSION_BUSY" => StatusCode::CONFLICT,
        "NOT_TRIGGERED" => StatusCode::UNPROCESSABLE_ENTITY,
        "INVALID_INPUT" | "PARSE_ERROR" => StatusCode::BAD_REQUEST,
        "STAGE_FAILED" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<AssistantError> for ApiError {
    fn from(e: AssistantError) -> Self {
        let code = e.code();
        let message = e.to_string();
        let record = match e {
            AssistantError::Stage { record, .. } => Some(record),
            _ => None,
        };
        Self {
            status: status_for(code),
            body: ErrorBody {
                code: code.to_string(),
                message,
                record,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(assistant: Arc<Assistant>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/fixtures", get(fixtures))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/turns", post(run_turn))
        .route("/v1/sessions/{id}/log", get(session_log))
        .layer(CorsLayer::permissive())
        .with_state(assistant)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn fixtures(State(a): State<Arc<Assistant>>) -> Json<serde_json::Value> {
    Json(json!({"fixtures": a.fixture_names()}))
}

async fn create_session(State(a): State<Arc<Assistant>>) -> (StatusCode, Json<serde_json::Value>) {
    (StatusCode::CREATED, Json(json!({"session_id": a.create_session()})))
}

async fn run_turn(
    State(a): State<Arc<Assistant>>,
    Path(id): Path<String>,
    body: Result<Json<TurnInput>, JsonRejection>,
) -> Result<Json<TurnRecord>, ApiError> {
    if !a.has_session(&id) {
        return Err(AssistantError::SessionNotFound(id).into());
    }
    let Json(input) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "INVALID_INPUT", e.body_text()))?;
    let record = tokio::task::spawn_blocking(move || a.run_turn(&id, input))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))??;
    Ok(Json(record))
}

async fn session_log(State(a): State<Arc<Assistant>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    if !a.has_session(&id) {
        return Err(AssistantError::SessionNotFound(id).into());
    }
    let path = a
        .log_path(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "LOG_UNAVAILABLE", "session logging is disabled"))?;
    let body = match tokio::fs::read_to_string(&path).await {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => {
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "LOG_ERROR",
                e.to_string(),
            ))
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
