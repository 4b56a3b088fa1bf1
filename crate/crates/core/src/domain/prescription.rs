use super::{DomainError, Medicine, PharmacyId, PrincipalId, ResourceId, ResourceKind, ResourceRef, Version};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Submitted,
    Received,
    Filling,
    Ready,
    PickedUp,
    Delivered,
}

impl Status {
    pub const ALL: [Status; 6] = [
        Status::Submitted,
        Status::Received,
        Status::Filling,
        Status::Ready,
        Status::PickedUp,
        Status::Delivered,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::PickedUp | Status::Delivered)
    }

    pub fn is_outstanding(self) -> bool {
        matches!(self, Status::Received | Status::Filling)
    }

    /// The state machine. `None` means the event is illegal from this status.
    pub fn next(self, event: Event) -> Option<Status> {
        use Event::*;
        use Status::*;
        match (self, event) {
            (Submitted, Receive) => Some(Received),
            (Received, StartFill) => Some(Filling),
            (Filling, MarkReady) => Some(Ready),
            (Ready, PickUp) => Some(PickedUp),
            (Ready, Deliver) => Some(Delivered),
            _ => None,
        }
    }

    /// Events that are legal from this status, in declaration order.
    pub fn legal_events(self) -> Vec<Event> {
        Event::ALL.into_iter().filter(|e| self.next(*e).is_some()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    Receive,
    StartFill,
    MarkReady,
    PickUp,
    Deliver,
}

impl Event {
    pub const ALL: [Event; 5] = [Event::Receive, Event::StartFill, Event::MarkReady, Event::PickUp, Event::Deliver];
}

/// What a physician fills in; the service adds identity, status and version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrescriptionDraft {
    pub patient_id: PrincipalId,
    pub pharmacy_id: PharmacyId,
    pub medicines: Vec<Medicine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prescription {
    id: ResourceId,
    patient_id: PrincipalId,
    creator_physician_id: PrincipalId,
    pharmacy_id: PharmacyId,
    medicines: Vec<Medicine>,
    status: Status,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    version: Version,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_id: Option<ResourceId>,
}

impl Prescription {
    /// A freshly written prescription in `Submitted`.
    pub fn submit(
        draft: PrescriptionDraft,
        physician: PrincipalId,
        version: Version,
        now: DateTime<Utc>,
    ) -> Result<Self, DomainError> {
        let rx = Self {
            id: ResourceId::random(),
            patient_id: draft.patient_id,
            creator_physician_id: physician,
            pharmacy_id: draft.pharmacy_id,
            medicines: draft.medicines,
            status: Status::Submitted,
            created_at: now,
            updated_at: now,
            version,
            parent_id: None,
        };
        rx.validate()?;
        Ok(rx)
    }

    /// Checks the structural invariants. Deserialized documents go through this too.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.medicines.is_empty() {
            return Err(DomainError::Invalid("prescription has no medicines".into()));
        }
        for m in &self.medicines {
            m.validate()?;
        }
        if self.updated_at < self.created_at {
            return Err(DomainError::Invalid("updated_at precedes created_at".into()));
        }
        Ok(())
    }

    pub fn transition(&self, event: Event, version: Version, now: DateTime<Utc>) -> Result<Self, DomainError> {
        let status = self.status.next(event).ok_or(DomainError::IllegalTransition {
            status: self.status,
            event,
        })?;
        self.check_version(&version)?;
        Ok(Self {
            status,
            updated_at: now.max(self.updated_at),
            version,
            ..self.clone()
        })
    }

    /// A new prescription for the same medicines with one refill consumed
    /// from each. `None` if any medicine has no refills left.
    pub fn renew(&self, version: Version, now: DateTime<Utc>) -> Option<Self> {
        if self.medicines.iter().any(|m| m.refills_remaining == 0) {
            return None;
        }
        let medicines = self
            .medicines
            .iter()
            .map(|m| Medicine {
                refills_remaining: m.refills_remaining - 1,
                ..m.clone()
            })
            .collect();
        Some(Self {
            id: ResourceId::random(),
            medicines,
            status: Status::Received,
            created_at: now,
            updated_at: now,
            version,
            parent_id: Some(self.id.clone()),
            ..self.clone()
        })
    }

    fn check_version(&self, next: &Version) -> Result<(), DomainError> {
        if *next <= self.version {
            return Err(DomainError::StaleVersion {
                current: self.version.clone(),
                next: next.clone(),
            });
        }
        Ok(())
    }

    pub fn id(&self) -> &ResourceId {
        &self.id
    }

    pub fn patient_id(&self) -> &PrincipalId {
        &self.patient_id
    }

    pub fn creator_physician_id(&self) -> &PrincipalId {
        &self.creator_physician_id
    }

    pub fn pharmacy_id(&self) -> &PharmacyId {
        &self.pharmacy_id
    }

    pub fn medicines(&self) -> &[Medicine] {
        &self.medicines
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.updated_at
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    pub fn parent_id(&self) -> Option<&ResourceId> {
        self.parent_id.as_ref()
    }

    pub fn resource(&self) -> ResourceRef {
        ResourceRef {
            kind: ResourceKind::Prescription,
            id: self.id.clone(),
            creator_id: self.creator_physician_id.clone(),
            patient_id: self.patient_id.clone(),
            pharmacy_id: Some(self.pharmacy_id.clone()),
        }
    }
}
