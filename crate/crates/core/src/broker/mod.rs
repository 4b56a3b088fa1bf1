//! Location-independent service invocation.
//!
//! Callers name a logical service; the client-side broker resolves it through
//! the [`Registry`], marshals a [`BrokerMessage`] and walks the endpoint list
//! (primary first) until one answers. The server-side broker on each node
//! dispatches to the locally hosted [`Service`]. Payloads are opaque bytes
//! throughout: neither half ever looks inside them.

mod network;
mod registry;
mod store;

pub use network::{LocalNetwork, NodeState};
pub use registry::{Registry, ServiceRecord};
pub use store::DocumentStore;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

/// Address of a node hosting a server-side broker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Endpoint(String);

impl Endpoint {
    pub fn new(addr: impl Into<String>) -> Self {
        Self(addr.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Endpoint {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(String);

impl RequestId {
    pub fn new(raw: impl Into<String>) -> Self {
        Self(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerMessage {
    pub request_id: RequestId,
    pub service: String,
    pub operation: String,
    #[serde(with = "hex_payload")]
    pub payload: Vec<u8>,
    pub reply_to: Endpoint,
}

mod hex_payload {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Application-level failure reported by the target service. Never retried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ServiceFault {
    pub code: String,
    pub message: String,
}

impl ServiceFault {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

/// A service reachable through a server-side broker.
///
/// Delivery is at-least-once, so implementations must treat a repeated
/// `request_id` as a replay and answer it without a second effect.
pub trait Service: Send + Sync {
    fn call(&self, operation: &str, request_id: &RequestId, payload: &[u8]) -> Result<Vec<u8>, ServiceFault>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Fault(#[from] ServiceFault),
}

pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &Endpoint, msg: &BrokerMessage, timeout: Duration) -> Result<Vec<u8>, TransportError>;
    fn reachable(&self, endpoint: &Endpoint) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrokerError {
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("{endpoint} already registered for {service:?}")]
    DuplicateEndpoint { service: String, endpoint: Endpoint },
    #[error("endpoint {0} is not reachable")]
    Unreachable(Endpoint),
    #[error("service record for {0:?} has no endpoints")]
    NoEndpoints(String),
    #[error("all replicas of {service:?} failed after {attempts} attempts: {last}")]
    AllReplicasFailed { service: String, attempts: u32, last: String },
    #[error("every attempt on {service:?} timed out ({attempts} attempts)")]
    Timeout { service: String, attempts: u32 },
    #[error(transparent)]
    Fault(#[from] ServiceFault),
    #[error("registry snapshot: {0}")]
    Snapshot(String),
}

/// Server-side broker: routes messages to services hosted on this node.
#[derive(Default)]
pub struct ServerBroker {
    services: RwLock<BTreeMap<String, Arc<dyn Service>>>,
}

impl ServerBroker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host(&self, name: impl Into<String>, service: Arc<dyn Service>) {
        self.services.write().unwrap().insert(name.into(), service);
    }

    pub fn hosts(&self, name: &str) -> bool {
        self.services.read().unwrap().contains_key(name)
    }

    pub fn dispatch(&self, msg: &BrokerMessage) -> Result<Vec<u8>, ServiceFault> {
        let service = self
            .services
            .read()
            .unwrap()
            .get(&msg.service)
            .cloned()
            .ok_or_else(|| ServiceFault::new("UnknownService", format!("{} is not hosted here", msg.service)))?;
        service.call(&msg.operation, &msg.request_id, &msg.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailoverPolicy {
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// Passes over the endpoint list before giving up.
    pub retry_budget: u32,
}

impl Default for FailoverPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(2),
            retry_budget: 2,
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub payload: Vec<u8>,
    pub endpoint: Endpoint,
    pub attempts: u32,
}

/// Client-side broker stub.
pub struct ClientBroker {
    node: Endpoint,
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    policy: FailoverPolicy,
    seq: AtomicU64,
}

impl ClientBroker {
    pub fn new(node: Endpoint, registry: Arc<Registry>, transport: Arc<dyn Transport>) -> Self {
        Self::with_policy(node, registry, transport, FailoverPolicy::default())
    }

    pub fn with_policy(node: Endpoint, registry: Arc<Registry>, transport: Arc<dyn Transport>, policy: FailoverPolicy) -> Self {
        Self {
            node,
            registry,
            transport,
            policy,
            seq: AtomicU64::new(0),
        }
    }

    pub fn node(&self) -> &Endpoint {
        &self.node
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Registers an endpoint after checking it answers.
    pub fn register(&self, name: &str, endpoint: Endpoint) -> Result<ServiceRecord, BrokerError> {
        if !self.transport.reachable(&endpoint) {
            return Err(BrokerError::Unreachable(endpoint));
        }
        self.registry.register(name, endpoint)
    }

    pub fn message(&self, service: &str, operation: &str, payload: Vec<u8>) -> BrokerMessage {
        let n = self.seq.fetch_add(1, Ordering::Relaxed);
        BrokerMessage {
            request_id: RequestId(format!("{}#{n}", self.node)),
            service: service.to_owned(),
            operation: operation.to_owned(),
            payload,
            reply_to: self.node.clone(),
        }
    }

    /// Sends `msg`, failing over along the endpoint list. Service faults are
    /// returned at once; only transport failures move on to the next replica.
    pub fn invoke(&self, msg: &BrokerMessage) -> Result<Reply, BrokerError> {
        let record = self.registry.lookup(&msg.service)?;
        if record.endpoints.is_empty() {
            return Err(BrokerError::NoEndpoints(msg.service.clone()));
        }
        let mut attempts = 0;
        let mut all_timeouts = true;
        let mut last = String::new();
        for _ in 0..self.policy.retry_budget.max(1) {
            for endpoint in &record.endpoints {
                attempts += 1;
                match self.transport.send(endpoint, msg, self.policy.timeout) {
                    Ok(payload) => {
                        return Ok(Reply {
                            payload,
                            endpoint: endpoint.clone(),
                            attempts,
                        })
                    }
                    Err(TransportError::Fault(fault)) => return Err(BrokerError::Fault(fault)),
                    Err(e) => {
                        all_timeouts &= e == TransportError::Timeout;
                        last = format!("{endpoint}: {e}");
                    }
                }
            }
        }
        if all_timeouts {
            Err(BrokerError::Timeout {
                service: msg.service.clone(),
                attempts,
            })
        } else {
            Err(BrokerError::AllReplicasFailed {
                service: msg.service.clone(),
                attempts,
                last,
            })
        }
    }

    pub fn call(&self, service: &str, operation: &str, payload: Vec<u8>) -> Result<Reply, BrokerError> {
        self.invoke(&self.message(service, operation, payload))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};
    use std::collections::HashMap;
    use std::sync::Mutex;

    /// Counts effects, deduplicating on request id.
    #[derive(Default)]
    struct Counter {
        seen: Mutex<HashMap<RequestId, Vec<u8>>>,
        effects: AtomicU64,
        digests: Mutex<Vec<[u8; 32]>>,
    }

    impl Service for Counter {
        fn call(&self, operation: &str, request_id: &RequestId, payload: &[u8]) -> Result<Vec<u8>, ServiceFault> {
            if operation == "boom" {
                return Err(ServiceFault::new("Boom", "requested failure"));
            }
            let mut seen = self.seen.lock().unwrap();
            if let Some(reply) = seen.get(request_id) {
                return Ok(reply.clone());
            }
            self.digests.lock().unwrap().push(Sha256::digest(payload).into());
            let n = self.effects.fetch_add(1, Ordering::SeqCst) + 1;
            let reply = n.to_string().into_bytes();
            seen.insert(request_id.clone(), reply.clone());
            Ok(reply)
        }
    }

    fn setup(nodes: &[&str]) -> (Arc<LocalNetwork>, Arc<Counter>, ClientBroker) {
        let net = Arc::new(LocalNetwork::new());
        let counter = Arc::new(Counter::default());
        let registry = Arc::new(Registry::new());
        let client = ClientBroker::new("clinic".into(), registry, net.clone());
        for n in nodes {
            let server = Arc::new(ServerBroker::new());
            server.host("pharmacy.main", counter.clone());
            net.attach(Endpoint::from(*n), server);
            client.register("pharmacy.main", Endpoint::from(*n)).unwrap();
        }
        (net, counter, client)
    }

    #[test]
    fn healthy_primary_answers_first_try() {
        let (_net, counter, client) = setup(&["a", "b"]);
        let reply = client.call("pharmacy.main", "intake", b"rx".to_vec()).unwrap();
        assert_eq!((reply.endpoint.as_str(), reply.attempts), ("a", 1));
        assert_eq!(counter.effects.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn lost_reply_fails_over_without_double_effect() {
        let (net, counter, client) = setup(&["a", "b"]);
        // primary processes the request but the reply never arrives
        net.set_state(&"a".into(), NodeState::DropReplies);
        let reply = client.call("pharmacy.main", "intake", b"rx".to_vec()).unwrap();
        assert_eq!(reply.endpoint.as_str(), "b");
        assert_eq!(reply.attempts, 2);
        assert_eq!(net.deliveries(&"a".into()) + net.deliveries(&"b".into()), 2);
        assert_eq!(counter.effects.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn all_down_reports_every_attempt() {
        let (net, _counter, client) = setup(&["a", "b"]);
        net.set_state(&"a".into(), NodeState::Down);
        net.set_state(&"b".into(), NodeState::Down);
        let err = client.call("pharmacy.main", "intake", vec![]).unwrap_err();
        assert!(matches!(err, BrokerError::AllReplicasFailed { attempts: 4, .. }), "{err:?}");
        net.set_state(&"a".into(), NodeState::Hung);
        net.set_state(&"b".into(), NodeState::Hung);
        let err = client.call("pharmacy.main", "intake", vec![]).unwrap_err();
        assert_eq!(err, BrokerError::Timeout { service: "pharmacy.main".into(), attempts: 4 });
    }

    #[test]
    fn service_faults_do_not_fail_over() {
        let (net, _counter, client) = setup(&["a", "b"]);
        let err = client.call("pharmacy.main", "boom", vec![]).unwrap_err();
        assert!(matches!(err, BrokerError::Fault(ref f) if f.code == "Boom"));
        assert_eq!(net.deliveries(&"b".into()), 0);
    }

    #[test]
    fn unknown_service_and_unreachable_registration() {
        let (_net, _c, client) = setup(&["a"]);
        assert_eq!(
            client.call("store.PACS", "get", vec![]).unwrap_err(),
            BrokerError::UnknownService("store.PACS".into())
        );
        assert_eq!(
            client.register("pharmacy.main", "nowhere".into()).unwrap_err(),
            BrokerError::Unreachable("nowhere".into())
        );
    }

    #[test]
    fn migration_needs_no_caller_change() {
        let (net, counter, client) = setup(&["a"]);
        client.call("pharmacy.main", "intake", vec![1]).unwrap();
        let server = Arc::new(ServerBroker::new());
        server.host("pharmacy.main", counter.clone());
        net.attach("c".into(), server);
        client.registry().replace_endpoints("pharmacy.main", vec!["c".into()]).unwrap();
        net.set_state(&"a".into(), NodeState::Down);
        let reply = client.call("pharmacy.main", "intake", vec![2]).unwrap();
        assert_eq!(reply.endpoint.as_str(), "c");
        assert_eq!(counter.effects.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn payload_passes_through_untouched() {
        let (_net, counter, client) = setup(&["a"]);
        let payload: Vec<u8> = (0..=255u8).cycle().take(4096).collect();
        client.call("pharmacy.main", "intake", payload.clone()).unwrap();
        let want: [u8; 32] = Sha256::digest(&payload).into();
        assert_eq!(counter.digests.lock().unwrap().as_slice(), &[want]);
    }

    #[test]
    fn request_ids_unique_per_client() {
        let (_net, _c, client) = setup(&["a"]);
        let ids: std::collections::HashSet<_> = (0..1000).map(|_| client.message("s", "o", vec![]).request_id).collect();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn message_json_round_trip() {
        let (_net, _c, client) = setup(&["a"]);
        let msg = client.message("pharmacy.main", "intake", vec![0, 1, 254, 255]);
        let json = serde_json::to_string(&msg).unwrap();
        assert!(json.contains("\"0001feff\""));
        assert_eq!(serde_json::from_str::<BrokerMessage>(&json).unwrap(), msg);
    }
}
