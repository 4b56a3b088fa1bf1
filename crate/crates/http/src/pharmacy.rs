//! Pharmacy front, including the broker-facing intake endpoint.

use crate::api::{atom, blocking, method_not_allowed, not_found, ApiError, ApiJson, ApiQuery, Bearer, FeedQuery, LoginRequest, LoginResponse};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use carelink_core::broker::{BrokerMessage, Service};
use carelink_core::domain::{Event, Prescription, PrincipalId};
use carelink_core::pharmacy::{PatientPrescriptionStatus, PharmacyService, RenewalOutcome, StatusEvent};
use carelink_core::sync::ApplyReport;
use serde::Deserialize;
use std::sync::Arc;

type Pharmacy = State<Arc<PharmacyService>>;

pub fn router(pharmacy: Arc<PharmacyService>) -> Router {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/intake", post(intake))
        .route("/api/prescriptions", get(list_prescriptions))
        .route("/api/prescriptions/{id}/status", post(set_status))
        .route("/api/prescriptions/{id}/renewal", post(request_renewal))
        .route("/api/patients/{id}/prescriptions", get(patient_status))
        .route("/api/events", get(events))
        .route("/api/sync/feed", get(sync_feed))
        .route("/api/sync/apply", post(sync_apply))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(pharmacy)
}

async fn login(State(p): Pharmacy, ApiJson(req): ApiJson<LoginRequest>) -> Result<ApiJson<LoginResponse>, ApiError> {
    let token = blocking(move || p.login(&req.principal_id, &req.secret)).await?;
    Ok(ApiJson(LoginResponse { token }))
}

/// Body: a broker message. Reply: the raw reply payload, or a fault as an
/// error body with status 422.
async fn intake(State(p): Pharmacy, Bearer(t): Bearer, ApiJson(msg): ApiJson<BrokerMessage>) -> Result<Response, ApiError> {
    let outcome = blocking(move || {
        p.authorize_broker(&t)?;
        if msg.service != p.config().service_name() {
            return Ok(Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownService", format!("{} is not hosted here", msg.service))));
        }
        Ok(p.call(&msg.operation, &msg.request_id, &msg.payload)
            .map_err(|f| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &f.code, f.message)))
    })
    .await?;
    let reply = outcome?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], reply).into_response())
}

#[derive(Deserialize)]
struct StatusFilter {
    status: String,
}

async fn list_prescriptions(State(p): Pharmacy, Bearer(t): Bearer, ApiQuery(q): ApiQuery<StatusFilter>) -> Result<ApiJson<Vec<Prescription>>, ApiError> {
    if q.status != "outstanding" {
        return Err(ApiError::invalid(format!("unsupported status filter {:?}", q.status)));
    }
    Ok(ApiJson(blocking(move || p.list_outstanding(&t)).await?))
}

#[derive(Deserialize)]
struct StatusChange {
    event: Event,
}

async fn set_status(
    State(p): Pharmacy,
    Bearer(t): Bearer,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<StatusChange>,
) -> Result<ApiJson<Prescription>, ApiError> {
    Ok(ApiJson(blocking(move || p.set_status(&t, &id, req.event)).await?))
}

async fn request_renewal(State(p): Pharmacy, Bearer(t): Bearer, Path(id): Path<String>) -> Result<(StatusCode, ApiJson<RenewalOutcome>), ApiError> {
    let outcome = blocking(move || p.request_renewal(&t, &id)).await?;
    let status = match outcome {
        RenewalOutcome::Renewed(_) => StatusCode::CREATED,
        RenewalOutcome::Denied(_) => StatusCode::OK,
    };
    Ok((status, ApiJson(outcome)))
}

async fn patient_status(
    State(p): Pharmacy,
    Bearer(t): Bearer,
    Path(patient): Path<String>,
) -> Result<ApiJson<Vec<PatientPrescriptionStatus>>, ApiError> {
    Ok(ApiJson(blocking(move || p.patient_status(&t, &PrincipalId::new(patient))).await?))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
}

async fn events(State(p): Pharmacy, Bearer(t): Bearer, ApiQuery(q): ApiQuery<EventsQuery>) -> Result<ApiJson<Vec<StatusEvent>>, ApiError> {
    Ok(ApiJson(blocking(move || p.events(&t, q.since)).await?))
}

async fn sync_feed(State(p): Pharmacy, Bearer(t): Bearer, ApiQuery(q): ApiQuery<FeedQuery>) -> Result<Response, ApiError> {
    let (since, node) = q.parse()?;
    Ok(atom(blocking(move || p.sync_feed(&t, since, node.as_ref())).await?))
}

async fn sync_apply(State(p): Pharmacy, Bearer(t): Bearer, body: String) -> Result<ApiJson<ApplyReport>, ApiError> {
    Ok(ApiJson(blocking(move || p.sync_apply(&t, &body)).await?))
}
