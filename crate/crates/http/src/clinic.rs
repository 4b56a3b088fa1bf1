//! Clinic front.

use crate::api::{atom, blocking, method_not_allowed, not_found, ApiError, ApiJson, ApiQuery, Bearer, FeedQuery, LoginRequest, LoginResponse};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use carelink_core::clinic::{ClinicService, PharmacyDirectoryEntry, RangeKind, SubmissionReceipt};
use carelink_core::domain::{Appointment, ClinicalNote, PrescriptionDraft, PrincipalId, ResourceId};
use carelink_core::sync::ApplyReport;
use chrono::{DateTime, NaiveDate, Utc};
use serde::Deserialize;
use std::sync::Arc;

type Clinic = State<Arc<ClinicService>>;

pub fn router(clinic: Arc<ClinicService>) -> Router {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/appointments", get(list_appointments).post(schedule_appointment))
        .route("/api/patients/{id}/notes", get(list_notes).post(add_note))
        .route("/api/prescriptions", post(submit_prescription))
        .route("/api/pharmacies/nearest", get(nearest_pharmacy))
        .route("/api/sync/feed", get(sync_feed))
        .route("/api/sync/apply", post(sync_apply))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(clinic)
}

async fn login(State(c): Clinic, ApiJson(req): ApiJson<LoginRequest>) -> Result<ApiJson<LoginResponse>, ApiError> {
    let token = blocking(move || c.login(&req.principal_id, &req.secret)).await?;
    Ok(ApiJson(LoginResponse { token }))
}

#[derive(Deserialize)]
struct RangeQuery {
    range: String,
    anchor: NaiveDate,
}

async fn list_appointments(State(c): Clinic, Bearer(t): Bearer, ApiQuery(q): ApiQuery<RangeQuery>) -> Result<ApiJson<Vec<Appointment>>, ApiError> {
    let kind: RangeKind = q.range.parse().map_err(|_| ApiError::invalid(format!("range must be day or week, got {:?}", q.range)))?;
    Ok(ApiJson(blocking(move || c.list_appointments(&t, kind, q.anchor)).await?))
}

#[derive(Deserialize)]
struct NewAppointment {
    patient_id: PrincipalId,
    start: DateTime<Utc>,
    duration_minutes: u32,
}

async fn schedule_appointment(
    State(c): Clinic,
    Bearer(t): Bearer,
    ApiJson(req): ApiJson<NewAppointment>,
) -> Result<(StatusCode, ApiJson<Appointment>), ApiError> {
    let appt = blocking(move || c.schedule_appointment(&t, &req.patient_id, req.start, req.duration_minutes)).await?;
    Ok((StatusCode::CREATED, ApiJson(appt)))
}

#[derive(Deserialize)]
struct NewNote {
    body: String,
    #[serde(default)]
    appointment_id: Option<ResourceId>,
}

async fn add_note(
    State(c): Clinic,
    Bearer(t): Bearer,
    Path(patient): Path<String>,
    ApiJson(req): ApiJson<NewNote>,
) -> Result<(StatusCode, ApiJson<ClinicalNote>), ApiError> {
    let note = blocking(move || c.add_note(&t, &PrincipalId::new(patient), &req.body, req.appointment_id.as_ref())).await?;
    Ok((StatusCode::CREATED, ApiJson(note)))
}

async fn list_notes(State(c): Clinic, Bearer(t): Bearer, Path(patient): Path<String>) -> Result<ApiJson<Vec<ClinicalNote>>, ApiError> {
    Ok(ApiJson(blocking(move || c.list_notes(&t, &PrincipalId::new(patient))).await?))
}

async fn submit_prescription(
    State(c): Clinic,
    Bearer(t): Bearer,
    ApiJson(draft): ApiJson<PrescriptionDraft>,
) -> Result<ApiJson<SubmissionReceipt>, ApiError> {
    Ok(ApiJson(blocking(move || c.submit_prescription(&t, draft)).await?))
}

#[derive(Deserialize)]
struct Origin {
    lat: f64,
    lon: f64,
}

async fn nearest_pharmacy(State(c): Clinic, Bearer(t): Bearer, ApiQuery(o): ApiQuery<Origin>) -> Result<ApiJson<PharmacyDirectoryEntry>, ApiError> {
    Ok(ApiJson(blocking(move || c.find_nearest_pharmacy(&t, o.lat, o.lon)).await?))
}

async fn sync_feed(State(c): Clinic, Bearer(t): Bearer, ApiQuery(q): ApiQuery<FeedQuery>) -> Result<Response, ApiError> {
    let (since, node) = q.parse()?;
    Ok(atom(blocking(move || c.sync_feed(&t, since, node.as_ref())).await?))
}

async fn sync_apply(State(c): Clinic, Bearer(t): Bearer, body: String) -> Result<ApiJson<ApplyReport>, ApiError> {
    Ok(ApiJson(blocking(move || c.sync_apply(&t, &body)).await?))
}
