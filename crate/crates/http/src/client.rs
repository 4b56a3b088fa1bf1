//! Blocking HTTP clients: a JSON API client, the remote broker transport,
//! a sync endpoint and an external pharmacy locator.
//!
//! reqwest's blocking client must not be created or dropped on an async
//! worker, so the transports build theirs on first use.

use crate::api::{ErrorBody, LoginRequest, LoginResponse, ATOM_CONTENT_TYPE};
use carelink_core::broker::{BrokerMessage, Endpoint, ServiceFault, Transport, TransportError};
use carelink_core::clinic::{check_coordinates, PharmacyDirectoryEntry, PharmacyLocator};
use carelink_core::domain::{NodeId, PrincipalId, SessionToken};
use carelink_core::error::ServiceError;
use carelink_core::sync::{ApplyReport, Cursor, SyncEndpoint, SyncError};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::{header, Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("HTTP {status}: {}: {}", body.error_code, body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("request failed: {0}")]
    Request(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error_code),
            ClientError::Request(_) => None,
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Request(e.to_string())
    }
}

fn error_body(status: StatusCode, resp: Response) -> ErrorBody {
    let text = resp.text().unwrap_or_default();
    serde_json::from_str(&text).unwrap_or(ErrorBody {
        error_code: format!("Http{}", status.as_u16()),
        message: text,
    })
}

fn check(resp: Response) -> Result<Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp)
    } else {
        Err(ClientError::Api {
            status: status.as_u16(),
            body: error_body(status, resp),
        })
    }
}

fn trim(base: &str) -> String {
    base.trim_end_matches('/').to_owned()
}

/// JSON client for one front. Adds the bearer token once logged in.
#[derive(Clone)]
pub struct ApiClient {
    base: String,
    http: Client,
    token: Option<SessionToken>,
}

impl ApiClient {
    pub fn new(base: &str) -> Self {
        Self {
            base: trim(base),
            http: Client::new(),
            token: None,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn token(&self) -> Option<&SessionToken> {
        self.token.as_ref()
    }

    pub fn with_token(mut self, token: SessionToken) -> Self {
        self.token = Some(token);
        self
    }

    pub fn login(&mut self, principal_id: &str, secret: &str) -> Result<SessionToken, ClientError> {
        let req = LoginRequest {
            principal_id: PrincipalId::new(principal_id),
            secret: secret.to_owned(),
        };
        let resp: LoginResponse = self.post("/api/login", &req)?;
        self.token = Some(resp.token.clone());
        Ok(resp.token)
    }

    pub fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let rb = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => rb.bearer_auth(t.expose()),
            None => rb,
        }
    }

    pub fn send(&self, rb: RequestBuilder) -> Result<Response, ClientError> {
        check(rb.send()?)
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Ok(self.send(self.request(Method::GET, path))?.json()?)
    }

    pub fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Ok(self.send(self.request(Method::POST, path).json(body))?.json()?)
    }
}

pub fn is_http(endpoint: &Endpoint) -> bool {
    let e = endpoint.as_str();
    e.starts_with("http://") || e.starts_with("https://")
}

/// Broker transport that posts messages to `<endpoint>/api/intake`,
/// logging in to each endpoint with the broker's credentials.
pub struct HttpTransport {
    principal_id: PrincipalId,
    secret: String,
    http: OnceLock<Client>,
    tokens: Mutex<HashMap<Endpoint, SessionToken>>,
}

fn transport_error(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Unreachable(e.to_string())
    }
}

impl HttpTransport {
    pub fn new(principal_id: PrincipalId, secret: impl Into<String>) -> Self {
        Self {
            principal_id,
            secret: secret.into(),
            http: OnceLock::new(),
            tokens: Mutex::new(HashMap::new()),
        }
    }

    fn client(&self) -> &Client {
        self.http.get_or_init(Client::new)
    }

    fn token(&self, endpoint: &Endpoint, timeout: Duration, fresh: bool) -> Result<SessionToken, TransportError> {
        if !fresh {
            if let Some(t) = self.tokens.lock().unwrap().get(endpoint) {
                return Ok(t.clone());
            }
        }
        let req = LoginRequest {
            principal_id: self.principal_id.clone(),
            secret: self.secret.clone(),
        };
        let resp = self
            .client()
            .post(format!("{}/api/login", trim(endpoint.as_str())))
            .timeout(timeout)
            .json(&req)
            .send()
            .map_err(transport_error)?;
        let token = classify(resp)?.json::<LoginResponse>().map_err(transport_error)?.token;
        self.tokens.lock().unwrap().insert(endpoint.clone(), token.clone());
        Ok(token)
    }

    fn post(&self, endpoint: &Endpoint, msg: &BrokerMessage, token: &SessionToken, timeout: Duration) -> Result<Response, TransportError> {
        self.client()
            .post(format!("{}/api/intake", trim(endpoint.as_str())))
            .timeout(timeout)
            .bearer_auth(token.expose())
            .json(msg)
            .send()
            .map_err(transport_error)
    }
}

/// 5xx means the node is in trouble and another replica may do better;
/// anything else that is not a success is the service's answer.
fn classify(resp: Response) -> Result<Response, TransportError> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp)
    } else if status.is_server_error() {
        Err(TransportError::Unreachable(format!("HTTP {status}")))
    } else {
        let body = error_body(status, resp);
        Err(TransportError::Fault(ServiceFault::new(body.error_code, body.message)))
    }
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &Endpoint, msg: &BrokerMessage, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let token = self.token(endpoint, timeout, false)?;
        let mut resp = self.post(endpoint, msg, &token, timeout)?;
        if resp.status() == StatusCode::UNAUTHORIZED {
            // the remote side restarted or expired the session
            let token = self.token(endpoint, timeout, true)?;
            resp = self.post(endpoint, msg, &token, timeout)?;
        }
        Ok(classify(resp)?.bytes().map_err(transport_error)?.to_vec())
    }

    fn reachable(&self, endpoint: &Endpoint) -> bool {
        is_http(endpoint)
    }
}

/// HTTP endpoints go over HTTP, everything else to the in-process network.
pub struct RoutedTransport {
    pub local: Arc<dyn Transport>,
    pub remote: Arc<dyn Transport>,
}

impl RoutedTransport {
    fn pick(&self, endpoint: &Endpoint) -> &dyn Transport {
        if is_http(endpoint) {
            self.remote.as_ref()
        } else {
            self.local.as_ref()
        }
    }
}

impl Transport for RoutedTransport {
    fn send(&self, endpoint: &Endpoint, msg: &BrokerMessage, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        self.pick(endpoint).send(endpoint, msg, timeout)
    }

    fn reachable(&self, endpoint: &Endpoint) -> bool {
        self.pick(endpoint).reachable(endpoint)
    }
}

/// A clinic or pharmacy sync API as seen by an offline device.
pub struct HttpSyncEndpoint {
    api: ApiClient,
}

fn sync_error(e: ClientError) -> SyncError {
    match &e {
        ClientError::Api { body, .. } if body.error_code == "MalformedFeed" => SyncError::MalformedFeed(body.message.clone()),
        ClientError::Api { body, .. } if body.error_code == "InvalidCursor" => SyncError::InvalidCursor(body.message.clone()),
        _ => SyncError::TransferFailed(e.to_string()),
    }
}

impl HttpSyncEndpoint {
    pub fn new(api: ApiClient) -> Self {
        Self { api }
    }

    pub fn login(base: &str, principal_id: &str, secret: &str) -> Result<Self, ClientError> {
        let mut api = ApiClient::new(base);
        api.login(principal_id, secret)?;
        Ok(Self { api })
    }
}

impl SyncEndpoint for HttpSyncEndpoint {
    fn pull(&self, since: Cursor, requester: &NodeId) -> Result<String, SyncError> {
        let rb = self
            .api
            .request(Method::GET, "/api/sync/feed")
            .query(&[("since", since.to_string()), ("node", requester.to_string())]);
        let resp = self.api.send(rb).map_err(sync_error)?;
        resp.text().map_err(|e| sync_error(e.into()))
    }

    fn push(&self, atom: &str) -> Result<ApplyReport, SyncError> {
        let rb = self
            .api
            .request(Method::POST, "/api/sync/apply")
            .header(header::CONTENT_TYPE, ATOM_CONTENT_TYPE)
            .body(atom.to_owned());
        let resp = self.api.send(rb).map_err(sync_error)?;
        resp.json().map_err(|e| sync_error(e.into()))
    }
}

/// External directory: `GET <url>` answers a JSON array of entries. Any
/// failure reports `ProviderUnavailable` so a fallback can take over.
pub struct HttpLocator {
    url: String,
    timeout: Duration,
    http: OnceLock<Client>,
}

impl HttpLocator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            timeout,
            http: OnceLock::new(),
        }
    }
}

impl PharmacyLocator for HttpLocator {
    fn entries(&self) -> Result<Vec<PharmacyDirectoryEntry>, ServiceError> {
        let unavailable = |e: String| ServiceError::ProviderUnavailable(format!("{}: {e}", self.url));
        let resp = self
            .http
            .get_or_init(Client::new)
            .get(&self.url)
            .timeout(self.timeout)
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        let entries: Vec<PharmacyDirectoryEntry> = check(resp)
            .map_err(|e| unavailable(e.to_string()))?
            .json()
            .map_err(|e| unavailable(e.to_string()))?;
        for e in &entries {
            check_coordinates(e.latitude, e.longitude).map_err(|err| unavailable(err.to_string()))?;
        }
        Ok(entries)
    }
}
