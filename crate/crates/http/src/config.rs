//! Server configuration file.
//!
//! ```toml
//! [server]
//! clinic_addr = "127.0.0.1:8080"
//! pharmacy_addr = "127.0.0.1:8081"
//! ui_dir = "console-ui/dist"          # optional, served next to the API
//! mutual_auth = false
//!
//! [link]                              # see LinkConfig; every key optional
//! timeslots = 2
//! loss_prob = 0.05
//!
//! [pharmacy]
//! pharmacy_id = "main"
//!
//! [broker]
//! principal_id = "broker"             # account used on remote intake
//! secret = "broker-pass"
//! registry_snapshot = "registry.toml" # optional [services] table
//!
//! [keys]
//! file = "subscribers.keys"           # optional subscriber key file
//!
//! [locator]
//! url = "http://directory.example/pharmacies"  # optional external provider
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use crate::client::{HttpLocator, HttpTransport, RoutedTransport};
use carelink_core::broker::{FailoverPolicy, Transport};
use carelink_core::clinic::{ClinicConfig, PharmacyLocator, WithFallback};
use carelink_core::deployment::{demo_password, demo_pharmacies, Deployment, DeploymentConfig};
use carelink_core::domain::PrincipalId;
use carelink_core::link::LinkConfig;
use carelink_core::pharmacy::PharmacyConfig;
use carelink_core::security::parse_key_file;
use chrono::{DateTime, Utc};
use serde::Deserialize;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub clinic_addr: Option<SocketAddr>,
    pub pharmacy_addr: Option<SocketAddr>,
    pub ui_dir: Option<PathBuf>,
    pub mutual_auth: bool,
    pub start: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrokerSection {
    pub principal_id: String,
    pub secret: String,
    pub registry_snapshot: Option<PathBuf>,
    pub failover: FailoverPolicy,
}

impl Default for BrokerSection {
    fn default() -> Self {
        Self {
            principal_id: "broker".into(),
            secret: demo_password("broker"),
            registry_snapshot: None,
            failover: FailoverPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeysSection {
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocatorSection {
    pub url: Option<String>,
    pub timeout_ms: u64,
}

impl Default for LocatorSection {
    fn default() -> Self {
        Self {
            url: None,
            timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub server: ServerSection,
    pub link: LinkConfig,
    pub pharmacy: PharmacyConfig,
    pub broker: BrokerSection,
    pub keys: KeysSection,
    pub locator: LocatorSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.link.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml(&read(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Both fronts when neither address is configured.
    pub fn addrs(&self) -> (Option<SocketAddr>, Option<SocketAddr>) {
        match (self.server.clinic_addr, self.server.pharmacy_addr) {
            (None, None) => (Some(([127, 0, 0, 1], 8080).into()), Some(([127, 0, 0, 1], 8081).into())),
            other => other,
        }
    }

    pub fn ui_dir(&self) -> Option<PathBuf> {
        self.server.ui_dir.as_deref().map(|p| self.resolve(p))
    }

    pub fn deployment_config(&self) -> Result<DeploymentConfig, ConfigError> {
        let mut cfg = DeploymentConfig {
            clinic: ClinicConfig {
                link: self.link.clone(),
                ..ClinicConfig::default()
            },
            pharmacy: self.pharmacy.clone(),
            failover: self.broker.failover,
            mutual_auth: self.server.mutual_auth,
            ..DeploymentConfig::default()
        };
        if let Some(start) = self.server.start {
            cfg.start = start;
        }
        if let Some(file) = &self.keys.file {
            let keys = parse_key_file(&read(&self.resolve(file))?).map_err(|e| ConfigError::Invalid(format!("key file: {e}")))?;
            if let Some(k) = keys.get(&cfg.clinic.subscriber) {
                cfg.handset_key = k.clone();
            }
            cfg.subscriber_keys = keys;
        }
        Ok(cfg)
    }

    /// Wires a deployment whose clinic broker reaches `http://` endpoints
    /// over HTTP and everything else in process.
    pub fn build(&self) -> Result<Deployment, ConfigError> {
        let locator: Box<dyn PharmacyLocator> = match &self.locator.url {
            Some(url) => Box::new(WithFallback {
                primary: HttpLocator::new(url.clone(), Duration::from_millis(self.locator.timeout_ms)),
                fallback: demo_pharmacies(),
            }),
            None => Box::new(demo_pharmacies()),
        };
        let remote: Arc<dyn Transport> = Arc::new(HttpTransport::new(PrincipalId::new(self.broker.principal_id.as_str()), self.broker.secret.clone()));
        let d = Deployment::assemble(self.deployment_config()?, locator, |local| Arc::new(RoutedTransport { local, remote }))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(snap) = &self.broker.registry_snapshot {
            d.apply_registry_snapshot(&read(&self.resolve(snap))?)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(d)
    }
}
