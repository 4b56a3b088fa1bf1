#![allow(dead_code)]

use carelink_core::deployment::{demo_password, Deployment, DeploymentConfig};
use carelink_http::{clinic, pharmacy, spawn, ApiClient, ClientError};
use std::net::SocketAddr;

pub const ANY: ([u8; 4], u16) = ([127, 0, 0, 1], 0);

pub struct Node {
    pub d: Deployment,
    pub clinic: String,
    pub pharmacy: String,
}

pub fn start(d: Deployment) -> Node {
    let c = spawn(SocketAddr::from(ANY), clinic::router(d.clinic.clone())).unwrap();
    let p = spawn(SocketAddr::from(ANY), pharmacy::router(d.pharmacy.clone())).unwrap();
    Node {
        d,
        clinic: format!("http://{c}"),
        pharmacy: format!("http://{p}"),
    }
}

pub fn node() -> Node {
    start(Deployment::new(DeploymentConfig::default()).unwrap())
}

pub fn as_user(base: &str, id: &str) -> ApiClient {
    let mut api = ApiClient::new(base);
    api.login(id, &demo_password(id)).unwrap();
    api
}

/// (status, error_code) of a failed call.
pub fn failure<T: std::fmt::Debug>(r: Result<T, ClientError>) -> (u16, String) {
    match r {
        Err(ClientError::Api { status, body }) => (status, body.error_code),
        other => panic!("expected an API error, got {other:?}"),
    }
}

pub fn draft(patient: &str, medicines: usize, refills: u32) -> serde_json::Value {
    let meds: Vec<_> = (0..medicines)
        .map(|i| serde_json::json!({ "name": format!("med-{i}"), "dosage": "5 mg daily", "quantity": 1, "refills_remaining": refills }))
        .collect();
    serde_json::json!({ "patient_id": patient, "pharmacy_id": "main", "medicines": meds })
}
