use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::router::Gateway;
use crate::transport::Transport;
use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub text: String,
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            GatewayError::Input(_) => (StatusCode::BAD_REQUEST, "invalid_input"),
            GatewayError::LocalEndpoint(_) => (StatusCode::BAD_GATEWAY, "local_endpoint_failed"),
            GatewayError::Policy(_) | GatewayError::Config(_) | GatewayError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let body = ErrorBody {
            error: ErrorDetail { kind: kind.into(), message: self.to_string() },
        };
        (status, Json(body)).into_response()
    }
}

async fn route<T: Transport>(
    State(gw): State<Arc<Gateway<T>>>,
    Json(req): Json<RouteRequest>,
) -> Result<Json<crate::RouteResult>, GatewayError> {
    Ok(Json(gw.route(&req.text, req.dry_run).await?))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

/// `POST /v1/route` and `GET /healthz`.
pub fn app<T: Transport>(gateway: Arc<Gateway<T>>) -> Router {
    Router::new()
        .route("/v1/route", post(route::<T>))
        .route("/healthz", get(healthz))
        .with_state(gateway)
}

/// Binds `gateway.config.listen` and serves until the task is cancelled.
pub async fn serve<T: Transport>(gateway: Gateway<T>) -> Result<(), GatewayError> {
    let listener = tokio::net::TcpListener::bind(&gateway.config.listen).await?;
    axum::serve(listener, app(Arc::new(gateway))).await?;
    Ok(())
}
