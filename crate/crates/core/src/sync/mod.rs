//! Feed-based replication between a server and occasionally connected
//! devices: a pull at the start of the day and a push at its end.

mod atom;
mod store;

pub use atom::{format_time, parse_atom, to_atom, ATOM_NS, SYNC_NS};
pub use store::{ApplyReport, ReplicaStore, StoredRecord};

use crate::domain::{NodeId, Version};
use crate::link::{GsmLink, LinkError, SimTime};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("invalid cursor {0:?}")]
    InvalidCursor(String),
    #[error("malformed feed: {0}")]
    MalformedFeed(String),
    #[error("transfer failed: {0}")]
    TransferFailed(String),
}

impl From<LinkError> for SyncError {
    fn from(e: LinkError) -> Self {
        SyncError::TransferFailed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Upsert,
    Tombstone,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Upsert => "upsert",
            Op::Tombstone => "tombstone",
        }
    }
}

impl FromStr for Op {
    type Err = SyncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upsert" => Ok(Op::Upsert),
            "tombstone" => Ok(Op::Tombstone),
            other => Err(SyncError::MalformedFeed(format!("unknown op {other:?}"))),
        }
    }
}

/// Position in a store's change history. `START` precedes every change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cursor(pub u64);

impl Cursor {
    pub const START: Cursor = Cursor(0);
}

impl fmt::Display for Cursor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Cursor {
    type Err = SyncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" | "start" => Ok(Cursor::START),
            _ => s.parse().map(Cursor).map_err(|_| SyncError::InvalidCursor(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedEntry {
    pub entry_id: String,
    pub version: Version,
    pub kind: String,
    pub op: Op,
    pub updated_at: DateTime<Utc>,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncFeed {
    pub source_node: NodeId,
    /// Where the next request should resume.
    pub cursor: Cursor,
    pub entries: Vec<FeedEntry>,
}

/// An overwrite where both sides had edited the resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub entry_id: String,
    pub kept: Version,
    pub overwritten: Version,
}

/// Server side of the day cycle. Feeds travel as Atom documents.
pub trait SyncEndpoint {
    fn pull(&self, since: Cursor, requester: &NodeId) -> Result<String, SyncError>;
    fn push(&self, atom: &str) -> Result<ApplyReport, SyncError>;
}

impl SyncEndpoint for Mutex<ReplicaStore> {
    fn pull(&self, since: Cursor, requester: &NodeId) -> Result<String, SyncError> {
        let store = self.lock().unwrap();
        Ok(to_atom(&store.generate_feed_for(since, Some(requester))?))
    }

    fn push(&self, atom: &str) -> Result<ApplyReport, SyncError> {
        let feed = parse_atom(atom)?;
        Ok(self.lock().unwrap().apply_feed(&feed))
    }
}

impl<E: SyncEndpoint + ?Sized> SyncEndpoint for &E {
    fn pull(&self, since: Cursor, requester: &NodeId) -> Result<String, SyncError> {
        (**self).pull(since, requester)
    }

    fn push(&self, atom: &str) -> Result<ApplyReport, SyncError> {
        (**self).push(atom)
    }
}

/// Routes an endpoint over a GSM connection, charging simulated air time
/// for both directions. A lost transfer aborts the leg before anything is
/// applied on the receiving side.
pub struct LinkedEndpoint<E> {
    inner: E,
    state: Mutex<(GsmLink, SimTime)>,
}

const SYNC_REQUEST_BYTES: usize = 64;

impl<E: SyncEndpoint> LinkedEndpoint<E> {
    pub fn new(inner: E, link: GsmLink, now: SimTime) -> Self {
        Self {
            inner,
            state: Mutex::new((link, now)),
        }
    }

    pub fn now(&self) -> SimTime {
        self.state.lock().unwrap().1
    }

    pub fn set_now(&self, t: SimTime) {
        let mut s = self.state.lock().unwrap();
        s.1 = s.1.max(t);
    }

    fn carry(&self, bytes: usize) -> Result<(), SyncError> {
        let mut s = self.state.lock().unwrap();
        let start = s.1;
        let d = s.0.transfer(bytes, start)?;
        s.1 = d.delivered_at;
        Ok(())
    }
}

impl<E: SyncEndpoint> SyncEndpoint for LinkedEndpoint<E> {
    fn pull(&self, since: Cursor, requester: &NodeId) -> Result<String, SyncError> {
        self.carry(SYNC_REQUEST_BYTES)?;
        let atom = self.inner.pull(since, requester)?;
        self.carry(atom.len())?;
        Ok(atom)
    }

    fn push(&self, atom: &str) -> Result<ApplyReport, SyncError> {
        self.carry(atom.len())?;
        let report = self.inner.push(atom)?;
        self.carry(SYNC_REQUEST_BYTES)?;
        Ok(report)
    }
}

/// Offline replica with its two cursors.
#[derive(Debug, Clone)]
pub struct SyncDevice {
    pub store: ReplicaStore,
    pull_cursor: Cursor,
    push_cursor: Cursor,
    upstream: Option<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LegSummary {
    pub entries: usize,
    pub report: ApplyReport,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleSummary {
    pub morning: LegSummary,
    pub evening: LegSummary,
}

impl SyncDevice {
    pub fn new(store: ReplicaStore) -> Self {
        Self {
            store,
            pull_cursor: Cursor::START,
            push_cursor: Cursor::START,
            upstream: None,
        }
    }

    pub fn pull_cursor(&self) -> Cursor {
        self.pull_cursor
    }

    pub fn push_cursor(&self) -> Cursor {
        self.push_cursor
    }

    /// Start-of-day leg. Cursors only move once the feed is applied.
    pub fn morning_pull(&mut self, server: &dyn SyncEndpoint) -> Result<LegSummary, SyncError> {
        let atom = server.pull(self.pull_cursor, self.store.node())?;
        let feed = parse_atom(&atom)?;
        let report = self.store.apply_feed(&feed);
        self.pull_cursor = self.pull_cursor.max(feed.cursor);
        self.upstream = Some(feed.source_node);
        Ok(LegSummary {
            entries: feed.entries.len(),
            report,
        })
    }

    /// End-of-day leg: everything changed here since the last push, minus
    /// what came from the server itself.
    pub fn evening_push(&mut self, server: &dyn SyncEndpoint) -> Result<LegSummary, SyncError> {
        let feed = self.store.generate_feed_for(self.push_cursor, self.upstream.as_ref())?;
        let report = server.push(&to_atom(&feed))?;
        self.push_cursor = feed.cursor;
        Ok(LegSummary {
            entries: feed.entries.len(),
            report,
        })
    }
}

/// Both legs back to back. A failed leg leaves its cursor untouched, so the
/// next boundary simply retries it.
pub fn run_day_cycle(device: &mut SyncDevice, server: &dyn SyncEndpoint) -> Result<CycleSummary, SyncError> {
    let morning = device.morning_pull(server)?;
    let evening = device.evening_push(server)?;
    Ok(CycleSummary { morning, evening })
}
