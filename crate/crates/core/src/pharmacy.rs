//! Pharmacy web service: prescription intake, the outstanding queue,
//! status updates, patient queries and renewals.

use crate::broker::{RequestId, Service, ServiceFault};
use crate::domain::{
    authorize, Action, Clock, Directory, Event, NodeId, PharmacyId, Prescription, Principal, PrincipalId, ResourceId, Role,
    SessionManager, SessionToken, Status,
};
use crate::error::ServiceError;
use crate::link::SimTime;
use crate::security::{AuthCenter, CipherRegistry};
use crate::sync::{to_atom, parse_atom, ApplyReport, Cursor, ReplicaStore};
use crate::transport::{Envelope, EnvelopeError};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

pub const PRESCRIPTION_KIND: &str = "prescription";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PharmacyConfig {
    pub pharmacy_id: PharmacyId,
    pub node: NodeId,
    /// Fixed part of the per-message processing time.
    pub base_service_ms: f64,
    /// Added per medicine; parsing cost grows with the document.
    pub per_medicine_cost_ms: f64,
}

impl Default for PharmacyConfig {
    fn default() -> Self {
        Self {
            pharmacy_id: PharmacyId::new("main"),
            node: NodeId::new("pharmacy"),
            base_service_ms: 20.0,
            per_medicine_cost_ms: 5.0,
        }
    }
}

impl PharmacyConfig {
    pub fn service_time(&self, medicines: usize) -> SimTime {
        SimTime::from_millis_f64(self.base_service_ms + self.per_medicine_cost_ms * medicines as f64)
    }

    /// Broker name the pharmacy registers under.
    pub fn service_name(&self) -> String {
        service_name(&self.pharmacy_id)
    }
}

pub fn service_name(pharmacy: &PharmacyId) -> String {
    format!("pharmacy.{pharmacy}")
}

/// Acknowledgement returned to the clinic. It echoes the stored prescription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub prescription_id: ResourceId,
    pub pharmacy_id: PharmacyId,
    pub status: Status,
    #[serde(with = "fixed_ns")]
    pub received_at: SimTime,
    #[serde(with = "fixed_ns")]
    pub processed_at: SimTime,
    pub prescription: Prescription,
}

/// Zero-padded nanoseconds, so an acknowledgement's size does not depend on
/// when it was produced.
mod fixed_ns {
    use crate::link::SimTime;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &SimTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:020}", t.as_nanos()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SimTime, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map(SimTime::from_nanos).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntakeRecord {
    pub prescription_id: ResourceId,
    pub received_at: SimTime,
    reply: Vec<u8>,
}

/// Request ids already handled, with the reply each one got.
#[derive(Debug, Default)]
pub struct IntakeLedger {
    by_request: HashMap<RequestId, IntakeRecord>,
    by_prescription: HashMap<ResourceId, Ack>,
    effects: u64,
    replays: u64,
}

impl IntakeLedger {
    pub fn get(&self, request_id: &RequestId) -> Option<&IntakeRecord> {
        self.by_request.get(request_id)
    }

    pub fn len(&self) -> usize {
        self.by_request.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_request.is_empty()
    }

    /// Deliveries that changed the store.
    pub fn effects(&self) -> u64 {
        self.effects
    }

    /// Deliveries recognised as repeats.
    pub fn replays(&self) -> u64 {
        self.replays
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub seq: u64,
    pub prescription_id: ResourceId,
    pub patient_id: PrincipalId,
    pub status: Status,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientPrescriptionStatus {
    pub prescription_id: ResourceId,
    pub status: Status,
    /// Terminal and every medicine still has a refill.
    pub renewable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenialReason {
    NoRefills,
    /// The prescription was already renewed; renew the newest one instead.
    AlreadyRenewed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail")]
pub enum RenewalOutcome {
    Renewed(Prescription),
    Denied(DenialReason),
}

fn renewable(rx: &Prescription, renewed: &HashSet<ResourceId>) -> bool {
    rx.status().is_terminal() && !renewed.contains(rx.id()) && rx.medicines().iter().all(|m| m.refills_remaining >= 1)
}

fn renewed_ids(all: &[Prescription]) -> HashSet<ResourceId> {
    all.iter().filter_map(|rx| rx.parent_id().cloned()).collect()
}

struct State {
    store: ReplicaStore,
    ledger: IntakeLedger,
    busy_until: SimTime,
    arrivals: HashMap<ResourceId, u64>,
    next_arrival: u64,
    events: Vec<StatusEvent>,
}

impl State {
    fn log(&mut self, rx: &Prescription, at: DateTime<Utc>) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(StatusEvent {
            seq,
            prescription_id: rx.id().clone(),
            patient_id: rx.patient_id().clone(),
            status: rx.status(),
            at,
        });
    }

    fn arrived(&mut self, id: &ResourceId) {
        self.next_arrival += 1;
        self.arrivals.insert(id.clone(), self.next_arrival);
    }

    fn prescription(&self, id: &str) -> Result<Prescription, ServiceError> {
        self.store.get(id).ok_or_else(|| ServiceError::UnknownResource(id.to_owned()))
    }
}

pub struct PharmacyService {
    cfg: PharmacyConfig,
    directory: Arc<Directory>,
    sessions: SessionManager,
    clock: Arc<dyn Clock>,
    auth: Arc<AuthCenter>,
    ciphers: CipherRegistry,
    state: Mutex<State>,
}

impl PharmacyService {
    pub fn new(
        cfg: PharmacyConfig,
        directory: Arc<Directory>,
        clock: Arc<dyn Clock>,
        auth: Arc<AuthCenter>,
        ciphers: CipherRegistry,
    ) -> Self {
        let store = ReplicaStore::new(cfg.node.clone());
        Self {
            cfg,
            directory,
            sessions: SessionManager::new(clock.clone()),
            clock,
            auth,
            ciphers,
            state: Mutex::new(State {
                store,
                ledger: IntakeLedger::default(),
                busy_until: SimTime::ZERO,
                arrivals: HashMap::new(),
                next_arrival: 0,
                events: Vec::new(),
            }),
        }
    }

    pub fn config(&self) -> &PharmacyConfig {
        &self.cfg
    }

    pub fn login(&self, id: &PrincipalId, secret: &str) -> Result<SessionToken, ServiceError> {
        Ok(self.sessions.login(&self.directory, id, secret)?)
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    fn principal(&self, token: &SessionToken) -> Result<Principal, ServiceError> {
        let id = self.sessions.principal(token)?;
        self.directory.get(&id).ok_or(ServiceError::InvalidSession)
    }

    fn audit(&self, token: &SessionToken, op: &str, resource: &str) -> Result<(), ServiceError> {
        Ok(self.sessions.record(token, op, resource)?)
    }

    /// Broker-facing intake. A repeated request id gets the stored reply; a
    /// prescription already on file under another request id is acknowledged
    /// again without touching the store.
    pub fn receive_prescription(&self, request_id: &RequestId, envelope: &[u8]) -> Result<Vec<u8>, ServiceError> {
        let mut guard = self.state.lock().unwrap();
        let st = &mut *guard;
        if let Some(rec) = st.ledger.by_request.get(request_id) {
            let reply = rec.reply.clone();
            st.ledger.replays += 1;
            return Ok(reply);
        }
        let env = Envelope::decode(envelope)?;
        let suite = self
            .ciphers
            .get(&env.cipher)
            .ok_or_else(|| ServiceError::DecryptFailed(format!("unknown cipher {}", env.cipher)))?;
        let key = self
            .auth
            .session_key(&env.subscriber, &env.challenge)
            .map_err(|e| ServiceError::DecryptFailed(e.to_string()))?;
        let plain = env.open(suite.as_ref(), key)?;
        let rx: Prescription =
            serde_json::from_slice(&plain).map_err(|e| ServiceError::MalformedPrescription(e.to_string()))?;
        rx.validate().map_err(|e| ServiceError::MalformedPrescription(e.to_string()))?;
        if rx.pharmacy_id() != &self.cfg.pharmacy_id {
            return Err(ServiceError::WrongPharmacy(rx.pharmacy_id().to_string()));
        }

        let existing = st.ledger.by_prescription.get(rx.id()).cloned();
        let ack = match existing {
            Some(ack) => {
                st.ledger.replays += 1;
                ack
            }
            None => {
                if rx.status() != Status::Submitted {
                    return Err(ServiceError::MalformedPrescription(format!("status is {:?}", rx.status())));
                }
                let now = self.clock.now();
                st.store.observe(rx.version());
                let stored = st
                    .store
                    .upsert_with(rx.id().as_str(), PRESCRIPTION_KIND, now, |v| rx.transition(Event::Receive, v, now))?;
                let start = env.time.max(st.busy_until);
                let done = start + self.cfg.service_time(stored.medicines().len());
                st.busy_until = done;
                st.arrived(stored.id());
                st.log(&stored, now);
                st.ledger.effects += 1;
                let ack = Ack {
                    prescription_id: stored.id().clone(),
                    pharmacy_id: self.cfg.pharmacy_id.clone(),
                    status: stored.status(),
                    received_at: env.time,
                    processed_at: done,
                    prescription: stored,
                };
                st.ledger.by_prescription.insert(ack.prescription_id.clone(), ack.clone());
                ack
            }
        };

        let body = serde_json::to_vec(&ack).expect("ack serializes");
        let reply_frame = env.frame + env.frames_used();
        let (reply, _) = Envelope::seal(
            suite.as_ref(),
            key,
            env.subscriber.clone(),
            env.challenge,
            reply_frame,
            ack.processed_at.max(env.time),
            &body,
        )
        .map_err(|e: EnvelopeError| ServiceError::from(e))?;
        let reply = reply.encode();
        st.ledger.by_request.insert(
            request_id.clone(),
            IntakeRecord {
                prescription_id: ack.prescription_id.clone(),
                received_at: env.time,
                reply: reply.clone(),
            },
        );
        Ok(reply)
    }

    /// Runs `f` with the intake ledger locked.
    pub fn with_ledger<R>(&self, f: impl FnOnce(&IntakeLedger) -> R) -> R {
        f(&self.state.lock().unwrap().ledger)
    }

    /// Every stored prescription, for audits and tests.
    pub fn prescriptions(&self) -> Vec<Prescription> {
        self.state.lock().unwrap().store.all(PRESCRIPTION_KIND)
    }

    pub fn list_outstanding(&self, token: &SessionToken) -> Result<Vec<Prescription>, ServiceError> {
        let actor = self.principal(token)?;
        if !matches!(actor.role(), Role::Pharmacist | Role::Privileged) {
            return Err(ServiceError::Unauthorized);
        }
        let st = self.state.lock().unwrap();
        let mut out: Vec<Prescription> = st
            .store
            .all::<Prescription>(PRESCRIPTION_KIND)
            .into_iter()
            .filter(|rx| rx.status().is_outstanding() && authorize(&actor, &rx.resource(), Action::Read).is_allowed())
            .collect();
        out.sort_by_key(|rx| (st.arrivals.get(rx.id()).copied().unwrap_or(u64::MAX), rx.created_at(), rx.id().clone()));
        drop(st);
        self.audit(token, "list_outstanding", "")?;
        Ok(out)
    }

    pub fn get_prescription(&self, token: &SessionToken, id: &str) -> Result<Prescription, ServiceError> {
        let actor = self.principal(token)?;
        let rx = self.state.lock().unwrap().prescription(id)?;
        if !authorize(&actor, &rx.resource(), Action::Read).is_allowed() {
            return Err(ServiceError::Unauthorized);
        }
        self.audit(token, "get_prescription", id)?;
        Ok(rx)
    }

    pub fn set_status(&self, token: &SessionToken, id: &str, event: Event) -> Result<Prescription, ServiceError> {
        let actor = self.principal(token)?;
        if !matches!(actor.role(), Role::Pharmacist | Role::Privileged) {
            return Err(ServiceError::Unauthorized);
        }
        let updated = {
            let mut st = self.state.lock().unwrap();
            let rx = st.prescription(id)?;
            if !authorize(&actor, &rx.resource(), Action::Write).is_allowed() {
                return Err(ServiceError::Unauthorized);
            }
            let now = self.clock.now();
            let updated = st.store.upsert_with(id, PRESCRIPTION_KIND, now, |v| rx.transition(event, v, now))?;
            st.log(&updated, now);
            updated
        };
        self.audit(token, "set_status", id)?;
        Ok(updated)
    }

    pub fn patient_status(&self, token: &SessionToken, patient: &PrincipalId) -> Result<Vec<PatientPrescriptionStatus>, ServiceError> {
        let actor = self.principal(token)?;
        let own = actor.role() == Role::Patient && actor.id() == patient;
        if !(own || actor.role() == Role::Privileged) {
            return Err(ServiceError::Unauthorized);
        }
        let all: Vec<Prescription> = self.state.lock().unwrap().store.all(PRESCRIPTION_KIND);
        let renewed = renewed_ids(&all);
        let mut rows: Vec<Prescription> = all.into_iter().filter(|rx| rx.patient_id() == patient).collect();
        rows.sort_by_key(|rx| (rx.created_at(), rx.id().clone()));
        self.audit(token, "patient_status", patient.as_str())?;
        Ok(rows
            .into_iter()
            .map(|rx| PatientPrescriptionStatus {
                prescription_id: rx.id().clone(),
                status: rx.status(),
                renewable: renewable(&rx, &renewed),
            })
            .collect())
    }

    /// Renewal without physician countersignature.
    pub fn request_renewal(&self, token: &SessionToken, id: &str) -> Result<RenewalOutcome, ServiceError> {
        let actor = self.principal(token)?;
        let outcome = {
            let mut st = self.state.lock().unwrap();
            let rx = st.prescription(id)?;
            if actor.id() != rx.patient_id() {
                return Err(ServiceError::Unauthorized);
            }
            if !rx.status().is_terminal() {
                return Err(ServiceError::NotTerminal(id.to_owned()));
            }
            let all: Vec<Prescription> = st.store.all(PRESCRIPTION_KIND);
            if renewed_ids(&all).contains(rx.id()) {
                drop(st);
                self.audit(token, "request_renewal", id)?;
                return Ok(RenewalOutcome::Denied(DenialReason::AlreadyRenewed));
            }
            let now = self.clock.now();
            let version = st.store.fresh_version();
            let renewed = rx.renew(version.clone(), now);
            if let Some(new_rx) = &renewed {
                st.store.insert_versioned(new_rx.id().as_str(), PRESCRIPTION_KIND, version, new_rx, now)?;
            }
            match renewed {
                None => RenewalOutcome::Denied(DenialReason::NoRefills),
                Some(new_rx) => {
                    st.arrived(new_rx.id());
                    st.log(&new_rx, now);
                    RenewalOutcome::Renewed(new_rx)
                }
            }
        };
        self.audit(token, "request_renewal", id)?;
        Ok(outcome)
    }

    /// Status changes after `since` that the caller may see.
    pub fn events(&self, token: &SessionToken, since: u64) -> Result<Vec<StatusEvent>, ServiceError> {
        let actor = self.principal(token)?;
        let all = matches!(actor.role(), Role::Pharmacist | Role::Privileged);
        let events = self
            .state
            .lock()
            .unwrap()
            .events
            .iter()
            .filter(|e| e.seq > since && (all || &e.patient_id == actor.id()))
            .cloned()
            .collect();
        self.audit(token, "events", "")?;
        Ok(events)
    }

    fn require_device(&self, token: &SessionToken) -> Result<(), ServiceError> {
        match self.principal(token)?.role() {
            Role::Device | Role::Privileged => Ok(()),
            _ => Err(ServiceError::Unauthorized),
        }
    }

    /// Gate for broker deliveries arriving over HTTP: only device and
    /// privileged accounts may submit envelopes.
    pub fn authorize_broker(&self, token: &SessionToken) -> Result<(), ServiceError> {
        self.require_device(token)
    }

    pub fn sync_feed(&self, token: &SessionToken, since: Cursor, requester: Option<&NodeId>) -> Result<String, ServiceError> {
        self.require_device(token)?;
        let atom = to_atom(&self.state.lock().unwrap().store.generate_feed_for(since, requester)?);
        self.audit(token, "sync_feed", "")?;
        Ok(atom)
    }

    pub fn sync_apply(&self, token: &SessionToken, atom: &str) -> Result<ApplyReport, ServiceError> {
        self.require_device(token)?;
        let feed = parse_atom(atom)?;
        let report = self.state.lock().unwrap().store.apply_feed(&feed);
        self.audit(token, "sync_apply", "")?;
        Ok(report)
    }

    /// Test and bench hook: serialized replica state.
    pub fn store_bytes(&self) -> Vec<u8> {
        self.state.lock().unwrap().store.canonical_bytes()
    }
}

impl Service for PharmacyService {
    fn call(&self, operation: &str, request_id: &RequestId, payload: &[u8]) -> Result<Vec<u8>, ServiceFault> {
        match operation {
            "intake" => self
                .receive_prescription(request_id, payload)
                .map_err(|e| ServiceFault::new(e.code(), e.to_string())),
            other => Err(ServiceFault::new("UnknownOperation", other.to_owned())),
        }
    }
}
