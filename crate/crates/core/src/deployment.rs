//! In-process wiring of a complete system: clinic, replicated pharmacy,
//! enterprise stores, registry and the simulated network between them.

use crate::broker::{
    BrokerError, ClientBroker, DocumentStore, Endpoint, FailoverPolicy, LocalNetwork, NodeState, Registry, ServerBroker, Transport,
};
use crate::clinic::{ClinicConfig, ClinicService, FixtureDirectory, PharmacyDirectoryEntry, PharmacyLocator};
use crate::domain::{Directory, ManualClock, PharmacyId, Principal, PrincipalId, Role};
use crate::error::ServiceError;
use crate::pharmacy::{PharmacyConfig, PharmacyService};
use crate::security::{AuthCenter, CipherRegistry, Subscriber, SubscriberKey};
use chrono::{DateTime, TimeZone, Utc};
use std::collections::HashMap;
use std::sync::Arc;

pub const ENTERPRISE_STORES: [&str; 4] = ["store.HIS", "store.LIS", "store.PACS", "store.CIS"];

/// Demo accounts as (id, role, display name). The password of each is
/// `<id>-pass`.
pub const DEMO_ACCOUNTS: [(&str, Role, &str); 9] = [
    ("dr-grey", Role::Physician, "Dr. Grey"),
    ("dr-shep", Role::Physician, "Dr. Shepherd"),
    ("nurse-kim", Role::Nurse, "Nurse Kim"),
    ("pharm-lee", Role::Pharmacist, "Lee (pharmacist)"),
    ("pat-ann", Role::Patient, "Ann"),
    ("pat-bob", Role::Patient, "Bob"),
    ("pda-1", Role::Device, "Clinic PDA"),
    ("admin", Role::Privileged, "Administrator"),
    // used by a clinic broker to deliver over HTTP
    ("broker", Role::Device, "Clinic broker"),
];

pub fn demo_password(id: &str) -> String {
    format!("{id}-pass")
}

/// Pharmacy locations known to the default locator.
pub fn demo_pharmacies() -> FixtureDirectory {
    FixtureDirectory(vec![
        PharmacyDirectoryEntry::new("main", "Main Street Pharmacy", 40.7128, -74.0060).unwrap(),
        PharmacyDirectoryEntry::new("harbour", "Harbour Pharmacy", 40.7003, -74.0122).unwrap(),
        PharmacyDirectoryEntry::new("uptown", "Uptown Pharmacy", 40.7831, -73.9712).unwrap(),
    ])
}

#[derive(Debug, Clone)]
pub struct DeploymentConfig {
    pub clinic: ClinicConfig,
    pub pharmacy: PharmacyConfig,
    /// Nodes hosting the pharmacy service, primary first.
    pub pharmacy_nodes: Vec<Endpoint>,
    pub failover: FailoverPolicy,
    /// Wall-clock start of the domain clock.
    pub start: DateTime<Utc>,
    pub mutual_auth: bool,
    pub handset_key: SubscriberKey,
    /// Further subscribers the authentication center knows, e.g. from a key file.
    pub subscriber_keys: HashMap<PrincipalId, SubscriberKey>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            clinic: ClinicConfig::default(),
            pharmacy: PharmacyConfig::default(),
            pharmacy_nodes: vec![Endpoint::new("pharmacy-a"), Endpoint::new("pharmacy-b")],
            failover: FailoverPolicy::default(),
            start: Utc.with_ymd_and_hms(2024, 3, 4, 8, 0, 0).unwrap(),
            mutual_auth: false,
            handset_key: SubscriberKey::from_bytes(*b"carelink-handset"),
            subscriber_keys: HashMap::new(),
        }
    }
}

pub struct Deployment {
    pub clock: Arc<ManualClock>,
    pub directory: Arc<Directory>,
    pub network: Arc<LocalNetwork>,
    pub registry: Arc<Registry>,
    pub auth: Arc<AuthCenter>,
    pub clinic: Arc<ClinicService>,
    pub pharmacy: Arc<PharmacyService>,
    pub pharmacy_nodes: Vec<Endpoint>,
    pub stores: Arc<DocumentStore>,
}

fn setup(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Invalid(format!("deployment: {e}"))
}

impl Deployment {
    pub fn new(cfg: DeploymentConfig) -> Result<Self, ServiceError> {
        Self::with_locator(cfg, Box::new(demo_pharmacies()))
    }

    pub fn with_locator(cfg: DeploymentConfig, locator: Box<dyn PharmacyLocator>) -> Result<Self, ServiceError> {
        Self::assemble(cfg, locator, |net| net)
    }

    /// Full constructor. `transport` wraps the in-process network into
    /// whatever the clinic broker should send through.
    pub fn assemble(
        cfg: DeploymentConfig,
        locator: Box<dyn PharmacyLocator>,
        transport: impl FnOnce(Arc<LocalNetwork>) -> Arc<dyn Transport>,
    ) -> Result<Self, ServiceError> {
        if cfg.pharmacy_nodes.is_empty() {
            return Err(setup("at least one pharmacy node is required"));
        }
        let clock = Arc::new(ManualClock::new(cfg.start));
        let directory = Arc::new(Directory::new());
        for (id, role, name) in DEMO_ACCOUNTS {
            let principal = match role {
                Role::Pharmacist => Principal::pharmacist(PrincipalId::new(id), name, cfg.pharmacy.pharmacy_id.clone()),
                _ => Principal::new(PrincipalId::new(id), role, name),
            };
            directory.add(principal, &demo_password(id))?;
        }

        let mut keys = cfg.subscriber_keys.clone();
        keys.insert(cfg.clinic.subscriber.clone(), cfg.handset_key.clone());
        let auth = Arc::new(AuthCenter::new(keys).with_mutual_auth(cfg.mutual_auth));
        let ciphers = CipherRegistry::standard();

        let pharmacy = Arc::new(PharmacyService::new(
            cfg.pharmacy.clone(),
            directory.clone(),
            clock.clone(),
            auth.clone(),
            ciphers.clone(),
        ));
        let network = Arc::new(LocalNetwork::new());
        // every replica node fronts the same service state
        for node in &cfg.pharmacy_nodes {
            let server = Arc::new(ServerBroker::new());
            server.host(cfg.pharmacy.service_name(), pharmacy.clone());
            network.attach(node.clone(), server);
        }
        let stores = Arc::new(DocumentStore::new());
        let enterprise = Arc::new(ServerBroker::new());
        for name in ENTERPRISE_STORES {
            enterprise.host(name, stores.clone());
        }
        network.attach(Endpoint::new("enterprise"), enterprise);

        let registry = Arc::new(Registry::new());
        let broker = Arc::new(ClientBroker::with_policy(
            Endpoint::new(cfg.clinic.node.as_str()),
            registry.clone(),
            transport(network.clone()),
            cfg.failover.clone(),
        ));
        for node in &cfg.pharmacy_nodes {
            broker.register(&cfg.pharmacy.service_name(), node.clone()).map_err(setup)?;
        }
        for name in ENTERPRISE_STORES {
            broker.register(name, Endpoint::new("enterprise")).map_err(setup)?;
        }

        let handset = Subscriber::new(cfg.clinic.subscriber.clone(), cfg.handset_key.clone());
        let clinic = Arc::new(ClinicService::new(
            cfg.clinic.clone(),
            directory.clone(),
            clock.clone(),
            broker,
            auth.clone(),
            handset,
            ciphers,
            locator,
        ));
        Ok(Self {
            clock,
            directory,
            network,
            registry,
            auth,
            clinic,
            pharmacy,
            pharmacy_nodes: cfg.pharmacy_nodes,
            stores,
        })
    }

    pub fn pharmacy_id(&self) -> &PharmacyId {
        &self.pharmacy.config().pharmacy_id
    }

    pub fn primary(&self) -> &Endpoint {
        &self.pharmacy_nodes[0]
    }

    /// Overrides registry records with the services listed in a snapshot.
    pub fn apply_registry_snapshot(&self, text: &str) -> Result<(), BrokerError> {
        let snap = Registry::from_snapshot(text)?;
        for name in snap.names() {
            let endpoints = snap.lookup(&name)?.endpoints;
            match self.registry.lookup(&name) {
                Ok(_) => self.registry.replace_endpoints(&name, endpoints)?,
                Err(_) => {
                    let mut last = None;
                    for e in endpoints {
                        last = Some(self.registry.register(&name, e)?);
                    }
                    last.expect("snapshot records are non-empty")
                }
            };
        }
        Ok(())
    }

    pub fn set_node(&self, node: &Endpoint, state: NodeState) {
        self.network.set_state(node, state);
    }

    /// Clinic login with a demo account.
    pub fn clinic_login(&self, id: &str) -> Result<crate::domain::SessionToken, ServiceError> {
        self.clinic.login(&PrincipalId::new(id), &demo_password(id))
    }

    /// Pharmacy login with a demo account.
    pub fn pharmacy_login(&self, id: &str) -> Result<crate::domain::SessionToken, ServiceError> {
        self.pharmacy.login(&PrincipalId::new(id), &demo_password(id))
    }
}
