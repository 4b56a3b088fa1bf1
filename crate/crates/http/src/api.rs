//! Conventions shared by both fronts: bearer auth, `{error_code, message}`
//! error bodies and JSON extractors that report failures the same way.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts};
use axum::http::{header, request::Parts, StatusCode};
use axum::response::{IntoResponse, Response};
use carelink_core::domain::{NodeId, PrincipalId, SessionToken};
use carelink_core::sync::{Cursor, SyncError};
use carelink_core::error::ServiceError;
use serde::{Deserialize, Serialize};

pub const ATOM_CONTENT_TYPE: &str = "application/atom+xml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error_code: code.to_owned(),
                message: message.into(),
            },
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "Invalid", message)
    }
}

pub fn status_for(e: &ServiceError) -> StatusCode {
    use ServiceError::*;
    match e {
        InvalidSession | InvalidCredentials => StatusCode::UNAUTHORIZED,
        Unauthorized => StatusCode::FORBIDDEN,
        UnknownResource(_) | UnknownService(_) | EmptyDirectory => StatusCode::NOT_FOUND,
        IllegalTransition { .. } | StaleVersion(_) | OverlapConflict(_) => StatusCode::CONFLICT,
        Invalid(_) | InvalidCursor(_) => StatusCode::BAD_REQUEST,
        MalformedPrescription(_) | DecryptFailed(_) | WrongPharmacy(_) | NotTerminal(_) | MalformedFeed(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        TransferFailed(_) | AllReplicasFailed(_) | ProviderUnavailable(_) | Remote { .. } => StatusCode::BAD_GATEWAY,
        Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self::new(status_for(&e), e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::invalid(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::invalid(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

/// `Json` whose rejections use the API error body.
#[derive(Debug, FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

impl<T: Serialize> IntoResponse for ApiJson<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

#[derive(Debug, FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct ApiQuery<T>(pub T);

/// Session token from `Authorization: Bearer <token>`.
pub struct Bearer(pub SessionToken);

impl<S: Send + Sync> FromRequestParts<S> for Bearer {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _state: &S) -> Result<Self, Self::Rejection> {
        parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(|t| Bearer(SessionToken::from_secret(t.trim())))
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "InvalidSession", "missing bearer token"))
    }
}

/// Runs a service call off the async workers; the services block.
pub async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this endpoint")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub principal_id: PrincipalId,
    pub secret: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: SessionToken,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FeedQuery {
    pub since: Option<String>,
    /// Requesting node; its own changes are left out of the feed.
    pub node: Option<String>,
}

impl FeedQuery {
    pub fn parse(self) -> Result<(Cursor, Option<NodeId>), ApiError> {
        let since = match self.since.as_deref() {
            None => Cursor::START,
            Some(raw) => raw.parse().map_err(|e: SyncError| ApiError::from(ServiceError::from(e)))?,
        };
        Ok((since, self.node.map(NodeId::new)))
    }
}

pub fn atom(xml: String) -> Response {
    ([(header::CONTENT_TYPE, ATOM_CONTENT_TYPE)], xml).into_response()
}
