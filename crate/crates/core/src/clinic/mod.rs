//! Clinic web service: appointments, clinical notes, prescription submission
//! over the air link, and the nearest-pharmacy lookup.

pub mod locator;

pub use locator::{check_coordinates, find_nearest, haversine_km, FixtureDirectory, PharmacyDirectoryEntry, PharmacyLocator, WithFallback};

use crate::broker::ClientBroker;
use crate::domain::{
    authorize, Action, Appointment, ClinicalNote, Clock, Directory, NodeId, PharmacyId, Prescription, PrescriptionDraft,
    Principal, PrincipalId, ResourceId, Role, SessionManager, SessionToken, Status,
};
use crate::error::ServiceError;
use crate::link::{Delivery, GsmLink, LinkConfig, SimTime};
use crate::pharmacy::{service_name, Ack, PRESCRIPTION_KIND};
use crate::security::{negotiate_cipher, AuthCenter, CipherPolicy, CipherRegistry, SessionKey, StreamCipher, Subscriber};
use crate::sync::{parse_atom, to_atom, ApplyReport, Cursor, ReplicaStore};
use crate::transport::Envelope;
use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

pub const APPOINTMENT_KIND: &str = "appointment";
pub const NOTE_KIND: &str = "note";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClinicConfig {
    pub node: NodeId,
    /// Subscriber identity of the clinic's handset.
    pub subscriber: PrincipalId,
    pub link: LinkConfig,
    pub offered_ciphers: Vec<String>,
    pub cipher_policy: CipherPolicy,
}

impl Default for ClinicConfig {
    fn default() -> Self {
        Self {
            node: NodeId::new("clinic"),
            subscriber: PrincipalId::new("clinic-handset"),
            link: LinkConfig::default(),
            offered_ciphers: vec!["A5/1".into(), "A5/2".into()],
            cipher_policy: CipherPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeKind {
    Day,
    Week,
}

impl FromStr for RangeKind {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(RangeKind::Day),
            "week" => Ok(RangeKind::Week),
            other => Err(ServiceError::Invalid(format!("range must be day or week, got {other:?}"))),
        }
    }
}

/// Half-open UTC interval covered by a day, or by the Monday-to-Sunday week
/// containing `anchor`.
pub fn range_bounds(kind: RangeKind, anchor: NaiveDate) -> (DateTime<Utc>, DateTime<Utc>) {
    let first = match kind {
        RangeKind::Day => anchor,
        RangeKind::Week => anchor - Duration::days(i64::from(anchor.weekday().num_days_from_monday())),
    };
    let from = first.and_hms_opt(0, 0, 0).unwrap().and_utc();
    let days = if kind == RangeKind::Day { 1 } else { 7 };
    (from, from + Duration::days(days))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionReceipt {
    pub prescription_id: ResourceId,
    pub pharmacy_id: PharmacyId,
    pub submitted_at: SimTime,
    pub acked_at: SimTime,
    pub latency_s: f64,
    /// Status reported by the pharmacy.
    pub status: Status,
    pub served_by: String,
    pub broker_attempts: u32,
    pub uplink_frames: u64,
    pub downlink_frames: u64,
    pub cipher: String,
}

impl SubmissionReceipt {
    pub fn latency(&self) -> SimTime {
        self.acked_at - self.submitted_at
    }
}

/// A prescription that has crossed the uplink but not yet reached the
/// pharmacy. Splitting submission lets a simulation hand requests to the
/// pharmacy in arrival order.
pub struct PendingSubmission {
    token: SessionToken,
    prescription: Prescription,
    envelope: Vec<u8>,
    suite: Arc<dyn StreamCipher>,
    key: SessionKey,
    next_frame: u32,
    link: GsmLink,
    submitted_at: SimTime,
    uplink: Delivery,
}

impl PendingSubmission {
    pub fn prescription(&self) -> &Prescription {
        &self.prescription
    }

    pub fn submitted_at(&self) -> SimTime {
        self.submitted_at
    }

    /// When the request reaches the network side.
    pub fn arrival(&self) -> SimTime {
        self.uplink.delivered_at
    }

    pub fn envelope_len(&self) -> usize {
        self.envelope.len()
    }
}

pub struct ClinicService {
    cfg: ClinicConfig,
    directory: Arc<Directory>,
    sessions: SessionManager,
    clock: Arc<dyn Clock>,
    store: Mutex<ReplicaStore>,
    broker: Arc<ClientBroker>,
    auth: Arc<AuthCenter>,
    handset: Subscriber,
    ciphers: CipherRegistry,
    locator: Box<dyn PharmacyLocator>,
    /// Simulated time of interactive submissions and the next link stream.
    sim: Mutex<(SimTime, u64)>,
}

fn security_failure(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::TransferFailed(e.to_string())
}

impl ClinicService {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cfg: ClinicConfig,
        directory: Arc<Directory>,
        clock: Arc<dyn Clock>,
        broker: Arc<ClientBroker>,
        auth: Arc<AuthCenter>,
        handset: Subscriber,
        ciphers: CipherRegistry,
        locator: Box<dyn PharmacyLocator>,
    ) -> Self {
        let store = ReplicaStore::new(cfg.node.clone());
        Self {
            cfg,
            directory,
            sessions: SessionManager::new(clock.clone()),
            clock,
            store: Mutex::new(store),
            broker,
            auth,
            handset,
            ciphers,
            locator,
            sim: Mutex::new((SimTime::ZERO, 0)),
        }
    }

    pub fn config(&self) -> &ClinicConfig {
        &self.cfg
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    pub fn sim_now(&self) -> SimTime {
        self.sim.lock().unwrap().0
    }

    pub fn login(&self, id: &PrincipalId, secret: &str) -> Result<SessionToken, ServiceError> {
        Ok(self.sessions.login(&self.directory, id, secret)?)
    }

    fn principal(&self, token: &SessionToken) -> Result<Principal, ServiceError> {
        let id = self.sessions.principal(token)?;
        self.directory.get(&id).ok_or(ServiceError::InvalidSession)
    }

    fn audit(&self, token: &SessionToken, op: &str, resource: &str) -> Result<(), ServiceError> {
        Ok(self.sessions.record(token, op, resource)?)
    }

    fn require_patient(&self, id: &PrincipalId) -> Result<(), ServiceError> {
        match self.directory.get(id) {
            Some(p) if p.role() == Role::Patient => Ok(()),
            _ => Err(ServiceError::Invalid(format!("{id} is not a registered patient"))),
        }
    }

    pub fn schedule_appointment(
        &self,
        token: &SessionToken,
        patient: &PrincipalId,
        start: DateTime<Utc>,
        duration_minutes: u32,
    ) -> Result<Appointment, ServiceError> {
        let actor = self.principal(token)?;
        if actor.role() != Role::Physician {
            return Err(ServiceError::Unauthorized);
        }
        self.require_patient(patient)?;
        let appt = Appointment::new(patient.clone(), actor.id().clone(), start, duration_minutes)?;
        {
            let mut store = self.store.lock().unwrap();
            if let Some(clash) = store.all::<Appointment>(APPOINTMENT_KIND).into_iter().find(|a| a.overlaps(&appt)) {
                return Err(ServiceError::OverlapConflict(clash.id.to_string()));
            }
            store.upsert(appt.id.as_str(), APPOINTMENT_KIND, &appt, self.clock.now());
        }
        self.audit(token, "schedule_appointment", appt.id.as_str())?;
        Ok(appt)
    }

    /// Appointments the caller may read that intersect the range, by start.
    pub fn list_appointments(&self, token: &SessionToken, kind: RangeKind, anchor: NaiveDate) -> Result<Vec<Appointment>, ServiceError> {
        let actor = self.principal(token)?;
        let (from, to) = range_bounds(kind, anchor);
        let mut out: Vec<Appointment> = self
            .store
            .lock()
            .unwrap()
            .all::<Appointment>(APPOINTMENT_KIND)
            .into_iter()
            .filter(|a| a.intersects(from, to) && authorize(&actor, &a.resource(), Action::Read).is_allowed())
            .collect();
        out.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
        self.audit(token, "list_appointments", "")?;
        Ok(out)
    }

    /// Physicians and nurses may write notes about any registered patient.
    /// With `appointment`, the note is also linked from that appointment.
    pub fn add_note(
        &self,
        token: &SessionToken,
        patient: &PrincipalId,
        body: &str,
        appointment: Option<&ResourceId>,
    ) -> Result<ClinicalNote, ServiceError> {
        let actor = self.principal(token)?;
        if !matches!(actor.role(), Role::Physician | Role::Nurse) {
            return Err(ServiceError::Unauthorized);
        }
        self.require_patient(patient)?;
        if body.trim().is_empty() {
            return Err(ServiceError::Invalid("note body is empty".into()));
        }
        let now = self.clock.now();
        let note = ClinicalNote::new(patient.clone(), actor.id().clone(), body, now);
        {
            let mut store = self.store.lock().unwrap();
            if let Some(appt_id) = appointment {
                let mut appt: Appointment = store
                    .get(appt_id.as_str())
                    .ok_or_else(|| ServiceError::UnknownResource(appt_id.to_string()))?;
                if &appt.patient_id != patient || !authorize(&actor, &appt.resource(), Action::Write).is_allowed() {
                    return Err(ServiceError::Unauthorized);
                }
                appt.note_ids.push(note.id().clone());
                store.upsert(appt.id.as_str(), APPOINTMENT_KIND, &appt, now);
            }
            store.upsert(note.id().as_str(), NOTE_KIND, &note, now);
        }
        self.audit(token, "add_note", note.id().as_str())?;
        Ok(note)
    }

    pub fn read_note(&self, token: &SessionToken, id: &str) -> Result<ClinicalNote, ServiceError> {
        let actor = self.principal(token)?;
        let note: ClinicalNote = self
            .store
            .lock()
            .unwrap()
            .get(id)
            .ok_or_else(|| ServiceError::UnknownResource(id.to_owned()))?;
        if !authorize(&actor, &note.resource(), Action::Read).is_allowed() {
            return Err(ServiceError::Unauthorized);
        }
        self.audit(token, "read_note", id)?;
        Ok(note)
    }

    /// Notes about `patient` that the caller may read, oldest first.
    pub fn list_notes(&self, token: &SessionToken, patient: &PrincipalId) -> Result<Vec<ClinicalNote>, ServiceError> {
        let actor = self.principal(token)?;
        let mut notes: Vec<ClinicalNote> = self
            .store
            .lock()
            .unwrap()
            .all::<ClinicalNote>(NOTE_KIND)
            .into_iter()
            .filter(|n| n.patient_id() == patient && authorize(&actor, &n.resource(), Action::Read).is_allowed())
            .collect();
        notes.sort_by(|a, b| a.created_at().cmp(&b.created_at()).then_with(|| a.id().cmp(b.id())));
        self.audit(token, "list_notes", patient.as_str())?;
        Ok(notes)
    }

    pub fn get_prescription(&self, token: &SessionToken, id: &str) -> Result<Prescription, ServiceError> {
        let actor = self.principal(token)?;
        let rx: Prescription = self
            .store
            .lock()
            .unwrap()
            .get(id)
            .ok_or_else(|| ServiceError::UnknownResource(id.to_owned()))?;
        if !authorize(&actor, &rx.resource(), Action::Read).is_allowed() {
            return Err(ServiceError::Unauthorized);
        }
        self.audit(token, "get_prescription", id)?;
        Ok(rx)
    }

    /// Creates the prescription, enciphers it and pushes it across the
    /// uplink on connection `stream`, starting at `submitted_at`.
    pub fn prepare_submission(
        &self,
        token: &SessionToken,
        draft: PrescriptionDraft,
        submitted_at: SimTime,
        stream: u64,
    ) -> Result<PendingSubmission, ServiceError> {
        let actor = self.principal(token)?;
        if actor.role() != Role::Physician {
            return Err(ServiceError::Unauthorized);
        }
        self.broker.registry().lookup(&service_name(&draft.pharmacy_id))?;
        let now = self.clock.now();
        let rx = {
            let mut store = self.store.lock().unwrap();
            let version = store.fresh_version();
            let rx = Prescription::submit(draft, actor.id().clone(), version.clone(), now)?;
            store.insert_versioned(rx.id().as_str(), PRESCRIPTION_KIND, version, &rx, now)?;
            rx
        };

        let session = self.auth.authenticate(&self.handset).map_err(security_failure)?;
        let suite = negotiate_cipher(&self.ciphers, &self.cfg.offered_ciphers, &self.cfg.cipher_policy).map_err(security_failure)?;
        let plaintext = serde_json::to_vec(&rx).expect("prescription serializes");
        let (mut env, used) = Envelope::seal(
            suite.as_ref(),
            session.session_key,
            self.cfg.subscriber.clone(),
            session.challenge,
            0,
            SimTime::ZERO,
            &plaintext,
        )?;
        // the header is fixed width, so the size is known before the arrival time
        let mut link = GsmLink::open(&self.cfg.link, stream)?;
        let uplink = link.transfer(env.encode().len(), submitted_at)?;
        env.time = uplink.delivered_at;
        Ok(PendingSubmission {
            token: token.clone(),
            prescription: rx,
            envelope: env.encode(),
            suite,
            key: session.session_key,
            next_frame: used,
            link,
            submitted_at,
            uplink,
        })
    }

    /// Hands the request to the pharmacy through the broker and carries the
    /// acknowledgement back over the downlink.
    pub fn complete_submission(&self, pending: PendingSubmission) -> Result<SubmissionReceipt, ServiceError> {
        let PendingSubmission {
            token,
            prescription,
            envelope,
            suite,
            key,
            next_frame,
            mut link,
            submitted_at,
            uplink,
        } = pending;
        let reply = self
            .broker
            .call(&service_name(prescription.pharmacy_id()), "intake", envelope)?;
        let env = Envelope::decode(&reply.payload).map_err(|e| ServiceError::DecryptFailed(e.to_string()))?;
        if env.frame < next_frame {
            return Err(ServiceError::DecryptFailed(format!("reply reuses keystream frame {}", env.frame)));
        }
        let ack: Ack = serde_json::from_slice(&env.open(suite.as_ref(), key)?)
            .map_err(|e| ServiceError::DecryptFailed(format!("unreadable acknowledgement: {e}")))?;
        if &ack.prescription_id != prescription.id() {
            return Err(ServiceError::DecryptFailed("acknowledgement is for another prescription".into()));
        }
        let downlink = link.transfer(reply.payload.len(), env.time.max(uplink.delivered_at))?;
        self.audit(&token, "submit_prescription", prescription.id().as_str())?;
        Ok(SubmissionReceipt {
            prescription_id: prescription.id().clone(),
            pharmacy_id: ack.pharmacy_id,
            submitted_at,
            acked_at: downlink.delivered_at,
            latency_s: (downlink.delivered_at - submitted_at).as_secs_f64(),
            status: ack.status,
            served_by: reply.endpoint.to_string(),
            broker_attempts: reply.attempts,
            uplink_frames: uplink.frames,
            downlink_frames: downlink.frames,
            cipher: suite.name().to_owned(),
        })
    }

    /// Interactive submission on the service's own simulated clock.
    pub fn submit_prescription(&self, token: &SessionToken, draft: PrescriptionDraft) -> Result<SubmissionReceipt, ServiceError> {
        let (at, stream) = {
            let mut sim = self.sim.lock().unwrap();
            sim.1 += 1;
            (sim.0, sim.1)
        };
        let receipt = self.complete_submission(self.prepare_submission(token, draft, at, stream)?)?;
        let mut sim = self.sim.lock().unwrap();
        sim.0 = sim.0.max(receipt.acked_at);
        Ok(receipt)
    }

    pub fn find_nearest_pharmacy(&self, token: &SessionToken, lat: f64, lon: f64) -> Result<PharmacyDirectoryEntry, ServiceError> {
        self.principal(token)?;
        let entry = find_nearest(lat, lon, self.locator.as_ref())?;
        self.audit(token, "find_nearest_pharmacy", entry.pharmacy_id.as_str())?;
        Ok(entry)
    }

    fn require_device(&self, token: &SessionToken) -> Result<(), ServiceError> {
        match self.principal(token)?.role() {
            Role::Device | Role::Privileged => Ok(()),
            _ => Err(ServiceError::Unauthorized),
        }
    }

    pub fn sync_feed(&self, token: &SessionToken, since: Cursor, requester: Option<&NodeId>) -> Result<String, ServiceError> {
        self.require_device(token)?;
        let atom = to_atom(&self.store.lock().unwrap().generate_feed_for(since, requester)?);
        self.audit(token, "sync_feed", "")?;
        Ok(atom)
    }

    pub fn sync_apply(&self, token: &SessionToken, atom: &str) -> Result<ApplyReport, ServiceError> {
        self.require_device(token)?;
        let feed = parse_atom(atom)?;
        let report = self.store.lock().unwrap().apply_feed(&feed);
        self.audit(token, "sync_apply", "")?;
        Ok(report)
    }

    pub fn store_bytes(&self) -> Vec<u8> {
        self.store.lock().unwrap().canonical_bytes()
    }
}
