//! HTTP front end over the task store.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hdr_core::gateway::Clock;
use serde::Deserialize;
use serde_json::json;

use crate::queue::{QueueError, TaskState};
use crate::store::Store;

#[derive(Clone)]
pub struct ServiceState {
    pub store: Arc<Store>,
    pub clock: Arc<dyn Clock>,
}

#[derive(Debug, Deserialize)]
pub struct NewTask {
    pub query: String,
    #[serde(default)]
    pub priority: i64,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({"error": message.to_string()}))).into_response()
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn create_task(State(s): State<ServiceState>, Json(body): Json<NewTask>) -> Response {
    let r = blocking(move || s.store.enqueue(&body.query, body.priority, s.clock.now())).await;
    match r {
        Ok(Ok(id)) => (StatusCode::CREATED, Json(json!({"task_id": id}))).into_response(),
        Ok(Err(QueueError::EmptyQuery)) => error(StatusCode::BAD_REQUEST, QueueError::EmptyQuery),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(resp) => resp,
    }
}

async fn get_task(State(s): State<ServiceState>, Path(id): Path<i64>) -> Response {
    match blocking(move || s.store.task(id)).await {
        Ok(Ok(Some(t))) => Json(json!({
            "task_id": t.id,
            "query": t.query,
            "state": t.state,
            "stage": t.current_stage,
            "attempt": t.attempt,
            "priority": t.priority,
            "failure": t.failure,
        }))
        .into_response(),
        Ok(Ok(None)) => error(StatusCode::NOT_FOUND, format!("no task {id}")),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(resp) => resp,
    }
}

async fn get_report(State(s): State<ServiceState>, Path(id): Path<i64>) -> Response {
    let r = blocking(move || -> Result<_, String> {
        let task = s.store.task(id).map_err(|e| e.to_string())?;
        let run = s.store.run(id).map_err(|e| e.to_string())?;
        Ok((task, run))
    })
    .await;
    match r {
        Ok(Ok((None, _))) => error(StatusCode::NOT_FOUND, format!("no task {id}")),
        Ok(Ok((Some(t), None))) => error(
            StatusCode::CONFLICT,
            format!("task {id} is {} with no report", t.state),
        ),
        Ok(Ok((Some(t), Some(_)))) if t.state != TaskState::Completed => {
            error(StatusCode::CONFLICT, format!("task {id} is {}", t.state))
        }
        Ok(Ok((Some(_), Some(run)))) => (
            [(header::CONTENT_TYPE, "application/json")],
            run.report_json,
        )
            .into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(resp) => resp,
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/tasks", post(create_task))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/report", get(get_report))
        .route("/healthz", get(healthz))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: ServiceState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
