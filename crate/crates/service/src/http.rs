use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use convsafe::annotation::WorkerAnnotation;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::service::{AnnotationService, SubmitError};

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub detail: String,
}

struct Failure(StatusCode, ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn fail(status: StatusCode, error: &str, detail: impl Into<String>) -> Failure {
    Failure(status, ApiError { error: error.into(), detail: detail.into() })
}

impl From<SubmitError> for Failure {
    fn from(e: SubmitError) -> Self {
        let (status, kind) = match &e {
            SubmitError::UnknownAssignment(_) => (StatusCode::NOT_FOUND, "unknown_assignment"),
            SubmitError::LeaseExpired(_) => (StatusCode::GONE, "lease_expired"),
            SubmitError::SchemaInvalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "schema_invalid"),
            SubmitError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate"),
            SubmitError::ThreadFull(_) => (StatusCode::CONFLICT, "thread_full"),
            SubmitError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        };
        fail(status, kind, e.to_string())
    }
}

#[derive(Deserialize)]
struct TaskQuery {
    worker: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitBody {
    pub assignment_id: String,
    pub annotation: WorkerAnnotation,
}

async fn task(State(svc): State<Arc<AnnotationService>>, Query(q): Query<TaskQuery>) -> Result<Response, Failure> {
    let worker = q.worker.unwrap_or_default();
    if worker.trim().is_empty() {
        return Err(fail(StatusCode::BAD_REQUEST, "bad_request", "worker id is required"));
    }
    Ok(Json(svc.next_task(&worker)).into_response())
}

async fn submit(State(svc): State<Arc<AnnotationService>>, Json(body): Json<SubmitBody>) -> Result<Response, Failure> {
    let ack = tokio::task::spawn_blocking(move || svc.submit(&body.assignment_id, body.annotation))
        .await
        .map_err(|e| fail(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ack).into_response())
}

async fn thread(State(svc): State<Arc<AnnotationService>>, Path(id): Path<String>) -> Result<Response, Failure> {
    match svc.thread(&id) {
        Some(t) => Ok(Json(t).into_response()),
        None => Err(fail(StatusCode::NOT_FOUND, "not_found", format!("no thread {id}"))),
    }
}

async fn progress(State(svc): State<Arc<AnnotationService>>) -> Response {
    Json(svc.progress()).into_response()
}

async fn targets(State(svc): State<Arc<AnnotationService>>) -> Response {
    Json(svc.vocabulary()).into_response()
}

/// API routes under `/api`, with static files from `ui_dir` for everything else.
pub fn router(svc: Arc<AnnotationService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/task", get(task))
        .route("/api/submit", post(submit))
        .route("/api/thread/{id}", get(thread))
        .route("/api/progress", get(progress))
        .route("/api/vocab/targets", get(targets))
        .with_state(svc);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
