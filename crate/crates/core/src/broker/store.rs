use super::{RequestId, Service, ServiceFault};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

/// Key/value document store standing in for the HIS, LIS, PACS and CIS
/// databases behind the enterprise broker.
///
/// Operations: `put` takes `{"key", "value"}`, `get` takes the raw key,
/// `keys` lists keys. Writes are deduplicated on request id.
#[derive(Default)]
pub struct DocumentStore {
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    docs: BTreeMap<String, serde_json::Value>,
    replies: HashMap<RequestId, Vec<u8>>,
    writes: u64,
}

#[derive(Serialize, Deserialize)]
struct Put {
    key: String,
    value: serde_json::Value,
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of writes that actually changed state.
    pub fn writes(&self) -> u64 {
        self.inner.lock().unwrap().writes
    }
}

impl Service for DocumentStore {
    fn call(&self, operation: &str, request_id: &RequestId, payload: &[u8]) -> Result<Vec<u8>, ServiceFault> {
        let mut inner = self.inner.lock().unwrap();
        match operation {
            "put" => {
                if let Some(reply) = inner.replies.get(request_id) {
                    return Ok(reply.clone());
                }
                let put: Put =
                    serde_json::from_slice(payload).map_err(|e| ServiceFault::new("MalformedDocument", e.to_string()))?;
                inner.docs.insert(put.key.clone(), put.value);
                inner.writes += 1;
                let reply = put.key.into_bytes();
                inner.replies.insert(request_id.clone(), reply.clone());
                Ok(reply)
            }
            "get" => {
                let key = std::str::from_utf8(payload).map_err(|e| ServiceFault::new("MalformedDocument", e.to_string()))?;
                let doc = inner
                    .docs
                    .get(key)
                    .ok_or_else(|| ServiceFault::new("UnknownResource", key.to_owned()))?;
                Ok(serde_json::to_vec(doc).unwrap())
            }
            "keys" => Ok(serde_json::to_vec(&inner.docs.keys().collect::<Vec<_>>()).unwrap()),
            other => Err(ServiceFault::new("UnknownOperation", other.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::{ClientBroker, Endpoint, LocalNetwork, Registry, ServerBroker};
    use std::sync::Arc;

    #[test]
    fn enterprise_stores_behind_one_node() {
        let net = Arc::new(LocalNetwork::new());
        let server = Arc::new(ServerBroker::new());
        let stores: Vec<_> = ["HIS", "LIS", "PACS", "CIS"].iter().map(|s| (format!("store.{s}"), Arc::new(DocumentStore::new()))).collect();
        for (name, store) in &stores {
            server.host(name.clone(), store.clone());
        }
        net.attach(Endpoint::from("enterprise"), server);
        let client = ClientBroker::new("pda".into(), Arc::new(Registry::new()), net);
        for (name, _) in &stores {
            client.register(name, "enterprise".into()).unwrap();
        }
        let doc = serde_json::json!({"key": "p1", "value": {"hb": 13.5}});
        let msg = client.message("store.LIS", "put", serde_json::to_vec(&doc).unwrap());
        client.invoke(&msg).unwrap();
        client.invoke(&msg).unwrap();
        assert_eq!(stores[1].1.writes(), 1);
        let got = client.call("store.LIS", "get", b"p1".to_vec()).unwrap().payload;
        assert_eq!(serde_json::from_slice::<serde_json::Value>(&got).unwrap(), serde_json::json!({"hb": 13.5}));
        assert!(client.call("store.HIS", "get", b"p1".to_vec()).is_err());
    }
}
