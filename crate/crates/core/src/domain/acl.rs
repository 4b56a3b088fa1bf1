use super::{PharmacyId, Principal, PrincipalId, ResourceId, Role};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Prescription,
    Appointment,
    Note,
}

impl ResourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::Prescription => "prescription",
            ResourceKind::Appointment => "appointment",
            ResourceKind::Note => "note",
        }
    }
}

/// The ownership facts an access decision needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceRef {
    pub kind: ResourceKind,
    pub id: ResourceId,
    pub creator_id: PrincipalId,
    pub patient_id: PrincipalId,
    /// Routing pharmacy; only set for prescriptions.
    pub pharmacy_id: Option<PharmacyId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allowed(self) -> bool {
        self == Decision::Allow
    }
}

/// Creator-attached access control.
///
/// Allowed: the creator; privileged users; the patient the record is about
/// (read only); a pharmacist on a prescription routed to their pharmacy.
/// Everyone else, including other physicians, is denied.
pub fn authorize(actor: &Principal, resource: &ResourceRef, action: Action) -> Decision {
    let allowed = actor.id() == &resource.creator_id
        || actor.role() == Role::Privileged
        || (actor.role() == Role::Patient && actor.id() == &resource.patient_id && action == Action::Read)
        || (actor.role() == Role::Pharmacist
            && resource.kind == ResourceKind::Prescription
            && resource.pharmacy_id.is_some()
            && actor.affiliation() == resource.pharmacy_id.as_ref());
    if allowed {
        Decision::Allow
    } else {
        Decision::Deny
    }
}
