//! HTTP front end. Adds transport and status codes only; every response
//! body comes from [`Service`] unchanged.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::service::{ErrorBody, Service, ServiceError};

pub const API_TOKEN_ENV: &str = "BUGBLITZ_API_TOKEN";

fn error_response(e: &ServiceError) -> Response {
    let status = match e {
        ServiceError::Invalid(_) | ServiceError::NotUtf8 => StatusCode::BAD_REQUEST,
        ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
    };
    let mut resp = (status, Json(ErrorBody::from(e))).into_response();
    if status == StatusCode::SERVICE_UNAVAILABLE {
        resp.headers_mut()
            .insert(header::RETRY_AFTER, HeaderValue::from_static("30"));
    }
    resp
}

async fn triage(State(service): State<Arc<Service>>, body: Bytes) -> Response {
    let result = tokio::task::spawn_blocking(move || service.triage_body(&body)).await;
    match result {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(join) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": join.to_string(), "retryable": false })),
        )
            .into_response(),
    }
}

async fn submit_job(State(service): State<Arc<Service>>, body: Bytes) -> Response {
    match service.submit(&body) {
        Ok(view) => (StatusCode::ACCEPTED, Json(view)).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn get_job(State(service): State<Arc<Service>>, Path(id): Path<String>) -> Response {
    match service.job(&id) {
        Some(view) => Json(view).into_response(),
        None => (
            StatusCode::NOT_FOUND,
            Json(json!({ "error": format!("no job `{id}`"), "retryable": false })),
        )
            .into_response(),
    }
}

async fn healthz(State(service): State<Arc<Service>>) -> Response {
    let health = tokio::task::spawn_blocking(move || service.health())
        .await
        .expect("health check does not panic");
    let status = if health.ready {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(health)).into_response()
}

async fn version() -> Json<serde_json::Value> {
    Json(json!({
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn require_token(State(token): State<Arc<String>>, request: Request, next: Next) -> Response {
    let presented = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token.as_str()) {
        next.run(request).await
    } else {
        (
            StatusCode::UNAUTHORIZED,
            Json(json!({ "error": "missing or invalid bearer token", "retryable": false })),
        )
            .into_response()
    }
}

/// Routes for one service. `/v1/*` requires `api_token` when one is given;
/// `/healthz` and `/version` are always open.
pub fn router(service: Arc<Service>, api_token: Option<String>, max_body_bytes: usize) -> Router {
    let mut api = Router::new()
        .route("/v1/triage", post(triage))
        .route("/v1/jobs", post(submit_job))
        .route("/v1/jobs/{id}", get(get_job));
    if let Some(token) = api_token.filter(|t| !t.is_empty()) {
        api = api.layer(middleware::from_fn_with_state(
            Arc::new(token),
            require_token,
        ));
    }
    Router::new()
        .merge(api)
        .route("/healthz", get(healthz))
        .route("/version", get(version))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    api_token: Option<String>,
    max_body_bytes: usize,
) -> std::io::Result<()> {
    axum::serve(listener, router(service, api_token, max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
