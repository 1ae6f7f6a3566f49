//! Stateless JSON facade over [`crate::api`].

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, ErrorKind};
use greyalloc::Execution;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::Invalid => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Domain => StatusCode::BAD_REQUEST,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.body())).into_response()
    }
}

/// `Json` extractor whose every rejection (bad syntax, wrong shape, failed
/// matrix validation, missing content type) is a 422 with an error body.
pub struct Body<T>(pub T);

impl<T, S> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(ApiError::invalid("MalformedBody", rejection.body_text())),
        }
    }
}

async fn health() -> Json<api::Health> {
    Json(api::health())
}

async fn ahp(Body(req): Body<api::AhpRequest>) -> Result<Json<api::AhpResponse>, ApiError> {
    api::ahp(&req).map(Json)
}

async fn allocate(Body(req): Body<api::AllocateRequest>) -> Result<Json<api::AllocateResponse>, ApiError> {
    api::allocate(&req).map(Json)
}

async fn forecast(Body(req): Body<api::ForecastRequest>) -> Result<Json<api::ForecastResponse>, ApiError> {
    api::forecast(&req).map(Json)
}

async fn sensitivity(
    Body(req): Body<api::SensitivityRequest>,
) -> Result<Json<api::SensitivityResponse>, ApiError> {
    // sweeps can be long; keep them off the async workers
    tokio::task::spawn_blocking(move || api::sensitivity(&req, Execution::Parallel))
        .await
        .map_err(|e| ApiError {
            kind: ErrorKind::Internal,
            code: "Internal".into(),
            message: e.to_string(),
        })?
        .map(Json)
}

/// API routes, plus static files from `static_dir` for every other path.
pub fn router(static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/ahp", post(ahp))
        .route("/api/allocate", post(allocate))
        .route("/api/forecast", post(forecast))
        .route("/api/sensitivity", post(sensitivity));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
