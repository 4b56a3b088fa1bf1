//! Healthcare entities shared by the clinic and pharmacy services.
//!
//! Everything in here is a plain value: mutations return a new value and
//! leave the original untouched. Stores decide how those values are
//! persisted and serialized.

mod acl;
mod prescription;
mod session;
mod version;

pub use acl::{authorize, Action, Decision, ResourceKind, ResourceRef};
pub use prescription::{Event, Prescription, PrescriptionDraft, Status};
pub use session::{CallLogEntry, Directory, Session, SessionManager, SessionToken, DEFAULT_IDLE_TIMEOUT};
pub use version::{LamportClock, NodeId, Version};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Mutex;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            /// Fresh UUID-formatted identifier.
            pub fn random() -> Self {
                Self(uuid::Uuid::new_v4().to_string())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(raw: &str) -> Self {
                Self(raw.to_owned())
            }
        }
    };
}

id_type!(
    /// Identifies a user or device.
    PrincipalId
);
id_type!(
    /// Identifies any stored resource (prescription, appointment, note).
    ResourceId
);
id_type!(PharmacyId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Physician,
    Nurse,
    Pharmacist,
    Patient,
    Device,
    Privileged,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Physician,
        Role::Nurse,
        Role::Pharmacist,
        Role::Patient,
        Role::Device,
        Role::Privileged,
    ];
}

/// An authenticated actor. The role is fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    id: PrincipalId,
    role: Role,
    pub display_name: String,
    /// Pharmacy a pharmacist works at; unused for other roles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affiliation: Option<PharmacyId>,
}

impl Principal {
    pub fn new(id: PrincipalId, role: Role, display_name: impl Into<String>) -> Self {
        Self {
            id,
            role,
            display_name: display_name.into(),
            affiliation: None,
        }
    }

    pub fn pharmacist(id: PrincipalId, display_name: impl Into<String>, pharmacy: PharmacyId) -> Self {
        Self {
            id,
            role: Role::Pharmacist,
            display_name: display_name.into(),
            affiliation: Some(pharmacy),
        }
    }

    pub fn id(&self) -> &PrincipalId {
        &self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn affiliation(&self) -> Option<&PharmacyId> {
        self.affiliation.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Medicine {
    pub name: String,
    pub dosage: String,
    pub quantity: u32,
    pub refills_remaining: u32,
}

impl Medicine {
    pub fn new(name: impl Into<String>, dosage: impl Into<String>, quantity: u32, refills_remaining: u32) -> Result<Self, DomainError> {
        let medicine = Self {
            name: name.into(),
            dosage: dosage.into(),
            quantity,
            refills_remaining,
        };
        medicine.validate()?;
        Ok(medicine)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.quantity == 0 {
            return Err(DomainError::Invalid(format!("medicine {:?} has zero quantity", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Appointment {
    pub id: ResourceId,
    pub patient_id: PrincipalId,
    pub physician_id: PrincipalId,
    pub start: DateTime<Utc>,
    pub duration_minutes: u32,
    #[serde(default)]
    pub note_ids: Vec<ResourceId>,
}

impl Appointment {
    pub fn new(
        patient_id: PrincipalId,
        physician_id: PrincipalId,
        start: DateTime<Utc>,
        duration_minutes: u32,
    ) -> Result<Self, DomainError> {
        if duration_minutes == 0 {
            return Err(DomainError::Invalid("appointment duration must be positive".into()));
        }
        Ok(Self {
            id: ResourceId::random(),
            patient_id,
            physician_id,
            start,
            duration_minutes,
            note_ids: Vec::new(),
        })
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::minutes(i64::from(self.duration_minutes))
    }

    /// Half-open interval intersection.
    pub fn intersects(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> bool {
        self.start < to && self.end() > from
    }

    pub fn overlaps(&self, other: &Appointment) -> bool {
        self.physician_id == other.physician_id && self.intersects(other.start, other.end())
    }

    pub fn resource(&self) -> ResourceRef {
        ResourceRef {
            kind: ResourceKind::Appointment,
            id: self.id.clone(),
            creator_id: self.physician_id.clone(),
            patient_id: self.patient_id.clone(),
            pharmacy_id: None,
        }
    }
}

/// Append-only clinical note. There are no setters; a correction is a new note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    id: ResourceId,
    patient_id: PrincipalId,
    author_id: PrincipalId,
    body: String,
    created_at: DateTime<Utc>,
}

impl ClinicalNote {
    pub fn new(patient_id: PrincipalId, author_id: PrincipalId, body: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            id: ResourceId::random(),
            patient_id,
            author_id,
            body: body.into(),
            created_at,
        }
    }

    pub fn id(&self) -> &ResourceId {
        &self.id
    }

    pub fn patient_id(&self) -> &PrincipalId {
        &self.patient_id
    }

    pub fn author_id(&self) -> &PrincipalId {
        &self.author_id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn resource(&self) -> ResourceRef {
        ResourceRef {
            kind: ResourceKind::Note,
            id: self.id.clone(),
            creator_id: self.author_id.clone(),
            patient_id: self.patient_id.clone(),
            pharmacy_id: None,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("illegal transition: {event:?} from {status:?}")]
    IllegalTransition { status: Status, event: Event },
    #[error("version {next} does not advance past {current}")]
    StaleVersion { current: Version, next: Version },
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("invalid session")]
    InvalidSession,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Source of wall-clock time for record timestamps and session expiry.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock that only moves when told to. Used by tests and the benchmark.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        let mut now = self.0.lock().unwrap();
        *now += by;
    }

    pub fn set(&self, to: DateTime<Utc>) {
        *self.0.lock().unwrap() = to;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}
