//! Test-only helpers shared by the integration suites.
#![allow(dead_code)]

pub mod a51_oracle;

use carelink_core::deployment::{Deployment, DeploymentConfig};
use carelink_core::domain::{Medicine, PharmacyId, PrescriptionDraft, PrincipalId};

pub fn medicines(n: usize, refills: u32) -> Vec<Medicine> {
    (0..n)
        .map(|i| Medicine::new(format!("med-{i}"), "10 mg twice daily", 1 + i as u32 % 3, refills).unwrap())
        .collect()
}

pub fn draft(patient: &str, n: usize, refills: u32) -> PrescriptionDraft {
    PrescriptionDraft {
        patient_id: PrincipalId::new(patient),
        pharmacy_id: PharmacyId::new("main"),
        medicines: medicines(n, refills),
    }
}

pub fn deployment() -> Deployment {
    Deployment::new(DeploymentConfig::default()).unwrap()
}
