use super::{BrokerError, Endpoint};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::RwLock;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub name: String,
    /// Primary first, replicas after.
    pub endpoints: Vec<Endpoint>,
    pub version: u64,
}

/// Logical name → endpoints. Registrations are serialized by the write lock;
/// lookups share the read lock.
#[derive(Debug, Default)]
pub struct Registry {
    records: RwLock<BTreeMap<String, ServiceRecord>>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    #[serde(default)]
    services: BTreeMap<String, Vec<Endpoint>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates the record, or appends `endpoint` as the next replica.
    pub fn register(&self, name: &str, endpoint: Endpoint) -> Result<ServiceRecord, BrokerError> {
        let mut records = self.records.write().unwrap();
        let record = records.entry(name.to_owned()).or_insert_with(|| ServiceRecord {
            name: name.to_owned(),
            endpoints: Vec::new(),
            version: 0,
        });
        if record.endpoints.contains(&endpoint) {
            return Err(BrokerError::DuplicateEndpoint {
                service: name.to_owned(),
                endpoint,
            });
        }
        record.endpoints.push(endpoint);
        record.version += 1;
        Ok(record.clone())
    }

    pub fn lookup(&self, name: &str) -> Result<ServiceRecord, BrokerError> {
        self.records
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownService(name.to_owned()))
    }

    /// Migrates a service. Callers keep using the same name.
    pub fn replace_endpoints(&self, name: &str, endpoints: Vec<Endpoint>) -> Result<ServiceRecord, BrokerError> {
        if endpoints.is_empty() {
            return Err(BrokerError::NoEndpoints(name.to_owned()));
        }
        let mut records = self.records.write().unwrap();
        let record = records
            .get_mut(name)
            .ok_or_else(|| BrokerError::UnknownService(name.to_owned()))?;
        record.endpoints = endpoints;
        record.version += 1;
        Ok(record.clone())
    }

    pub fn names(&self) -> Vec<String> {
        self.records.read().unwrap().keys().cloned().collect()
    }

    /// TOML `[services]` table of name → endpoint list.
    pub fn export_snapshot(&self) -> String {
        let services = self
            .records
            .read()
            .unwrap()
            .values()
            .map(|r| (r.name.clone(), r.endpoints.clone()))
            .collect();
        toml::to_string(&Snapshot { services }).expect("snapshot serializes")
    }

    pub fn from_snapshot(text: &str) -> Result<Self, BrokerError> {
        let snap: Snapshot = toml::from_str(text).map_err(|e| BrokerError::Snapshot(e.to_string()))?;
        let registry = Self::new();
        for (name, endpoints) in snap.services {
            if endpoints.is_empty() {
                return Err(BrokerError::Snapshot(format!("{name:?} has no endpoints")));
            }
            for e in endpoints {
                registry.register(&name, e)?;
            }
        }
        Ok(registry)
    }
}
