use super::{Clock, DomainError, Principal, PrincipalId};
use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::hours(8);

/// Opaque bearer token. Debug and Display never print the secret.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionToken(String);

impl SessionToken {
    pub fn generate() -> Self {
        let mut raw = [0u8; 24];
        rand::rng().fill_bytes(&mut raw);
        Self(hex::encode(raw))
    }

    pub fn from_secret(raw: impl Into<String>) -> Self {
        Self(raw.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionToken(<redacted>)")
    }
}

impl fmt::Display for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub at: DateTime<Utc>,
    pub operation: String,
    pub resource_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    token: SessionToken,
    principal_id: PrincipalId,
    created_at: DateTime<Utc>,
    call_log: Vec<CallLogEntry>,
}

impl Session {
    pub fn new(principal_id: PrincipalId, created_at: DateTime<Utc>) -> Self {
        Self {
            token: SessionToken::generate(),
            principal_id,
            created_at,
            call_log: Vec::new(),
        }
    }

    pub fn token(&self) -> &SessionToken {
        &self.token
    }

    pub fn principal_id(&self) -> &PrincipalId {
        &self.principal_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn call_log(&self) -> &[CallLogEntry] {
        &self.call_log
    }

    pub fn last_activity(&self) -> DateTime<Utc> {
        self.call_log.last().map_or(self.created_at, |e| e.at)
    }

    pub fn is_expired(&self, now: DateTime<Utc>, idle: Duration) -> bool {
        now - self.last_activity() > idle
    }

    /// Appends one log entry. Timestamps are clamped so the log stays monotone
    /// even if the clock steps backwards.
    pub fn record_call(
        &self,
        op_name: &str,
        resource_id: &str,
        now: DateTime<Utc>,
        idle: Duration,
    ) -> Result<Session, DomainError> {
        if self.is_expired(now, idle) {
            return Err(DomainError::InvalidSession);
        }
        let mut next = self.clone();
        next.call_log.push(CallLogEntry {
            at: now.max(self.last_activity()),
            operation: op_name.to_owned(),
            resource_id: resource_id.to_owned(),
        });
        Ok(next)
    }
}

struct Account {
    principal: Principal,
    secret_hash: [u8; 32],
}

fn hash_secret(id: &PrincipalId, secret: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(id.as_str().as_bytes());
    h.update([0]);
    h.update(secret.as_bytes());
    h.finalize().into()
}

/// Known principals and their login secrets.
#[derive(Default)]
pub struct Directory {
    accounts: RwLock<HashMap<PrincipalId, Account>>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, principal: Principal, secret: &str) -> Result<(), DomainError> {
        let mut accounts = self.accounts.write().unwrap();
        if accounts.contains_key(principal.id()) {
            return Err(DomainError::Invalid(format!("duplicate principal {}", principal.id())));
        }
        let secret_hash = hash_secret(principal.id(), secret);
        accounts.insert(principal.id().clone(), Account { principal, secret_hash });
        Ok(())
    }

    pub fn get(&self, id: &PrincipalId) -> Option<Principal> {
        self.accounts.read().unwrap().get(id).map(|a| a.principal.clone())
    }

    pub fn authenticate(&self, id: &PrincipalId, secret: &str) -> Result<Principal, DomainError> {
        let accounts = self.accounts.read().unwrap();
        let account = accounts.get(id).ok_or(DomainError::InvalidCredentials)?;
        if account.secret_hash != hash_secret(id, secret) {
            return Err(DomainError::InvalidCredentials);
        }
        Ok(account.principal.clone())
    }
}

/// Live sessions for one service.
pub struct SessionManager {
    sessions: Mutex<HashMap<SessionToken, Session>>,
    idle: Duration,
    clock: Arc<dyn Clock>,
}

impl SessionManager {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_idle_timeout(clock, DEFAULT_IDLE_TIMEOUT)
    }

    pub fn with_idle_timeout(clock: Arc<dyn Clock>, idle: Duration) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            idle,
            clock,
        }
    }

    pub fn login(&self, directory: &Directory, id: &PrincipalId, secret: &str) -> Result<SessionToken, DomainError> {
        let principal = directory.authenticate(id, secret)?;
        let session = Session::new(principal.id().clone(), self.clock.now());
        let token = session.token().clone();
        self.sessions.lock().unwrap().insert(token.clone(), session);
        Ok(token)
    }

    /// Returns the principal id behind a live token.
    pub fn principal(&self, token: &SessionToken) -> Result<PrincipalId, DomainError> {
        let sessions = self.sessions.lock().unwrap();
        let session = sessions.get(token).ok_or(DomainError::InvalidSession)?;
        if session.is_expired(self.clock.now(), self.idle) {
            return Err(DomainError::InvalidSession);
        }
        Ok(session.principal_id().clone())
    }

    pub fn record(&self, token: &SessionToken, op_name: &str, resource_id: &str) -> Result<(), DomainError> {
        let mut sessions = self.sessions.lock().unwrap();
        let session = sessions.get_mut(token).ok_or(DomainError::InvalidSession)?;
        *session = session.record_call(op_name, resource_id, self.clock.now(), self.idle)?;
        Ok(())
    }

    pub fn snapshot(&self, token: &SessionToken) -> Option<Session> {
        self.sessions.lock().unwrap().get(token).cloned()
    }
}
