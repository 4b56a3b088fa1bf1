use crate::broker::BrokerError;
use crate::domain::{DomainError, Event, Status};
use crate::link::LinkError;
use crate::sync::SyncError;
use crate::transport::EnvelopeError;

/// Errors surfaced by the clinic and pharmacy services. [`code`](Self::code)
/// is the stable `error_code` reported to API clients.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("not authorized")]
    Unauthorized,
    #[error("invalid or expired session")]
    InvalidSession,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("illegal transition: {event:?} from {status:?}")]
    IllegalTransition { status: Status, event: Event },
    #[error("stale version: {0}")]
    StaleVersion(String),
    #[error("appointment overlaps {0}")]
    OverlapConflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("malformed prescription: {0}")]
    MalformedPrescription(String),
    #[error("decryption failed: {0}")]
    DecryptFailed(String),
    #[error("prescription is addressed to pharmacy {0}")]
    WrongPharmacy(String),
    #[error("prescription {0} is not in a terminal state")]
    NotTerminal(String),
    #[error("transfer failed: {0}")]
    TransferFailed(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("{0}")]
    AllReplicasFailed(String),
    #[error("{0}")]
    Timeout(String),
    #[error("pharmacy directory is empty")]
    EmptyDirectory,
    #[error("location provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("invalid cursor {0}")]
    InvalidCursor(String),
    #[error("malformed feed: {0}")]
    MalformedFeed(String),
    /// Fault returned by a remote service, passed through unchanged.
    #[error("{code}: {message}")]
    Remote { code: String, message: String },
}

impl ServiceError {
    pub fn code(&self) -> &str {
        match self {
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::InvalidSession => "InvalidSession",
            ServiceError::InvalidCredentials => "InvalidCredentials",
            ServiceError::UnknownResource(_) => "UnknownResource",
            ServiceError::IllegalTransition { .. } => "IllegalTransition",
            ServiceError::StaleVersion(_) => "StaleVersion",
            ServiceError::OverlapConflict(_) => "OverlapConflict",
            ServiceError::Invalid(_) => "Invalid",
            ServiceError::MalformedPrescription(_) => "MalformedPrescription",
            ServiceError::DecryptFailed(_) => "DecryptFailed",
            ServiceError::WrongPharmacy(_) => "WrongPharmacy",
            ServiceError::NotTerminal(_) => "NotTerminal",
            ServiceError::TransferFailed(_) => "TransferFailed",
            ServiceError::UnknownService(_) => "UnknownService",
            ServiceError::AllReplicasFailed(_) => "AllReplicasFailed",
            ServiceError::Timeout(_) => "Timeout",
            ServiceError::EmptyDirectory => "EmptyDirectory",
            ServiceError::ProviderUnavailable(_) => "ProviderUnavailable",
            ServiceError::InvalidCursor(_) => "InvalidCursor",
            ServiceError::MalformedFeed(_) => "MalformedFeed",
            ServiceError::Remote { code, .. } => code,
        }
    }
}

impl From<DomainError> for ServiceError {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::IllegalTransition { status, event } => ServiceError::IllegalTransition { status, event },
            DomainError::StaleVersion { .. } => ServiceError::StaleVersion(e.to_string()),
            DomainError::UnknownResource(id) => ServiceError::UnknownResource(id),
            DomainError::InvalidSession => ServiceError::InvalidSession,
            DomainError::InvalidCredentials => ServiceError::InvalidCredentials,
            DomainError::Invalid(msg) => ServiceError::Invalid(msg),
        }
    }
}

impl From<SyncError> for ServiceError {
    fn from(e: SyncError) -> Self {
        match e {
            SyncError::InvalidCursor(c) => ServiceError::InvalidCursor(c),
            SyncError::MalformedFeed(m) => ServiceError::MalformedFeed(m),
            SyncError::TransferFailed(m) => ServiceError::TransferFailed(m),
        }
    }
}

impl From<LinkError> for ServiceError {
    fn from(e: LinkError) -> Self {
        ServiceError::TransferFailed(e.to_string())
    }
}

impl From<EnvelopeError> for ServiceError {
    fn from(e: EnvelopeError) -> Self {
        match e {
            EnvelopeError::Malformed(m) => ServiceError::MalformedPrescription(m),
            EnvelopeError::DecryptFailed(m) => ServiceError::DecryptFailed(m),
        }
    }
}

impl From<BrokerError> for ServiceError {
    fn from(e: BrokerError) -> Self {
        match e {
            BrokerError::UnknownService(s) => ServiceError::UnknownService(s),
            BrokerError::Timeout { .. } => ServiceError::Timeout(e.to_string()),
            BrokerError::Fault(f) => ServiceError::Remote {
                code: f.code,
                message: f.message,
            },
            other => ServiceError::AllReplicasFailed(other.to_string()),
        }
    }
}
