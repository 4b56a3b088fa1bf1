use super::{Conflict, Cursor, FeedEntry, Op, SyncError, SyncFeed};
use crate::domain::{LamportClock, NodeId, Version};
use chrono::{DateTime, Utc};
use serde::{de::DeserializeOwned, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredRecord {
    pub kind: String,
    pub version: Version,
    pub op: Op,
    pub updated_at: DateTime<Utc>,
    /// Compact JSON; `null` for tombstones.
    pub content: String,
    /// Local change position, used as the feed cursor.
    seq: u64,
    /// Node that handed us this version (ourselves for local writes).
    source: NodeId,
}

impl StoredRecord {
    pub fn is_live(&self) -> bool {
        self.op == Op::Upsert
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ApplyReport {
    pub applied: usize,
    pub skipped: usize,
    pub conflicts: Vec<Conflict>,
}

/// Versioned resources of one node. Versions per id never decrease and
/// tombstones are kept forever.
#[derive(Debug, Clone)]
pub struct ReplicaStore {
    clock: LamportClock,
    seq: u64,
    records: BTreeMap<String, StoredRecord>,
}

impl ReplicaStore {
    pub fn new(node: impl Into<NodeId>) -> Self {
        Self {
            clock: LamportClock::new(node.into()),
            seq: 0,
            records: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> &NodeId {
        self.clock.node()
    }

    /// Position after the latest change.
    pub fn cursor(&self) -> Cursor {
        Cursor(self.seq)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: &str) -> Option<&StoredRecord> {
        self.records.get(id)
    }

    pub fn version(&self, id: &str) -> Option<&Version> {
        self.records.get(id).map(|r| &r.version)
    }

    /// Live records of one kind, ordered by id.
    pub fn live<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = (&'a str, &'a StoredRecord)> + 'a {
        self.records
            .iter()
            .filter(move |(_, r)| r.is_live() && r.kind == kind)
            .map(|(id, r)| (id.as_str(), r))
    }

    pub fn get<T: DeserializeOwned>(&self, id: &str) -> Option<T> {
        let r = self.records.get(id).filter(|r| r.is_live())?;
        serde_json::from_str(&r.content).ok()
    }

    /// Live resources of `kind`. Records replicated in with content that does
    /// not decode as `T` are left out.
    pub fn all<T: DeserializeOwned>(&self, kind: &str) -> Vec<T> {
        self.live(kind).filter_map(|(_, r)| serde_json::from_str(&r.content).ok()).collect()
    }

    /// Moves the local clock past `v`, so the next local write supersedes it.
    pub fn observe(&mut self, v: &Version) {
        self.clock.observe(v.clock);
    }

    /// Version a local write to `id` would carry.
    pub fn next_version(&mut self, id: &str) -> Version {
        match self.records.get(id) {
            Some(r) => {
                let prev = r.version.clone();
                self.clock.tick_after(&prev)
            }
            None => self.clock.tick(),
        }
    }

    /// Version for a resource whose id is not yet known.
    pub fn fresh_version(&mut self) -> Version {
        self.clock.tick()
    }

    /// Stores `value` under a version obtained earlier, provided it still
    /// supersedes whatever is stored for `id`.
    pub fn insert_versioned(
        &mut self,
        id: &str,
        kind: &str,
        version: Version,
        value: &impl Serialize,
        now: DateTime<Utc>,
    ) -> Result<(), crate::domain::DomainError> {
        if let Some(current) = self.version(id) {
            if version <= *current {
                return Err(crate::domain::DomainError::StaleVersion {
                    current: current.clone(),
                    next: version,
                });
            }
        }
        self.clock.observe(version.clock);
        let content = serde_json::to_string(value).expect("resource serializes");
        self.write(id, kind, version, Op::Upsert, now, content);
        Ok(())
    }

    /// Writes a resource whose content depends on its new version.
    pub fn upsert_with<T: Serialize, E>(
        &mut self,
        id: &str,
        kind: &str,
        now: DateTime<Utc>,
        build: impl FnOnce(Version) -> Result<T, E>,
    ) -> Result<T, E> {
        let version = self.next_version(id);
        let value = build(version.clone())?;
        let content = serde_json::to_string(&value).expect("resource serializes");
        self.write(id, kind, version, Op::Upsert, now, content);
        Ok(value)
    }

    pub fn upsert(&mut self, id: &str, kind: &str, value: &impl Serialize, now: DateTime<Utc>) -> Version {
        let version = self.next_version(id);
        let content = serde_json::to_string(value).expect("resource serializes");
        self.write(id, kind, version.clone(), Op::Upsert, now, content);
        version
    }

    /// Tombstones `id`. Returns `None` if it was never stored here.
    pub fn delete(&mut self, id: &str, now: DateTime<Utc>) -> Option<Version> {
        let kind = self.records.get(id)?.kind.clone();
        let version = self.next_version(id);
        self.write(id, &kind, version.clone(), Op::Tombstone, now, "null".into());
        Some(version)
    }

    fn write(&mut self, id: &str, kind: &str, version: Version, op: Op, at: DateTime<Utc>, content: String) {
        self.seq += 1;
        let source = self.node().clone();
        self.records.insert(
            id.to_owned(),
            StoredRecord {
                kind: kind.to_owned(),
                version,
                op,
                updated_at: at,
                content,
                seq: self.seq,
                source,
            },
        );
    }

    /// Every change recorded after `since`, in version order.
    pub fn generate_feed(&self, since: Cursor) -> Result<SyncFeed, SyncError> {
        self.generate_feed_for(since, None)
    }

    /// As [`generate_feed`](Self::generate_feed), leaving out versions that
    /// `peer` itself delivered to us, since it already holds them.
    pub fn generate_feed_for(&self, since: Cursor, peer: Option<&NodeId>) -> Result<SyncFeed, SyncError> {
        if since.0 > self.seq {
            return Err(SyncError::InvalidCursor(since.to_string()));
        }
        let mut entries: Vec<FeedEntry> = self
            .records
            .iter()
            .filter(|(_, r)| r.seq > since.0 && peer != Some(&r.source))
            .map(|(id, r)| FeedEntry {
                entry_id: id.clone(),
                version: r.version.clone(),
                kind: r.kind.clone(),
                op: r.op,
                updated_at: r.updated_at,
                content: r.content.clone(),
            })
            .collect();
        entries.sort_by(|a, b| a.version.cmp(&b.version).then_with(|| a.entry_id.cmp(&b.entry_id)));
        Ok(SyncFeed {
            source_node: self.node().clone(),
            cursor: self.cursor(),
            entries,
        })
    }

    /// Last-writer-wins merge. Each entry is applied on its own, so a feed
    /// interrupted half way leaves every record at a valid version.
    pub fn apply_feed(&mut self, feed: &SyncFeed) -> ApplyReport {
        let mut report = ApplyReport::default();
        for entry in &feed.entries {
            self.clock.observe(entry.version.clock);
            let current = self.records.get(&entry.entry_id);
            if current.is_some_and(|r| entry.version <= r.version) {
                report.skipped += 1;
                continue;
            }
            if let Some(r) = current {
                if r.version.node != entry.version.node && (r.content != entry.content || r.op != entry.op) {
                    report.conflicts.push(Conflict {
                        entry_id: entry.entry_id.clone(),
                        kept: entry.version.clone(),
                        overwritten: r.version.clone(),
                    });
                }
            }
            self.seq += 1;
            self.records.insert(
                entry.entry_id.clone(),
                StoredRecord {
                    kind: entry.kind.clone(),
                    version: entry.version.clone(),
                    op: entry.op,
                    updated_at: entry.updated_at,
                    content: entry.content.clone(),
                    seq: self.seq,
                    source: feed.source_node.clone(),
                },
            );
            report.applied += 1;
        }
        report
    }

    /// Replicated state as bytes, for equality checks between nodes.
    /// Node-local bookkeeping (cursor positions, delivery source) is left out.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, r) in &self.records {
            let line = serde_json::json!([
                id,
                r.kind,
                r.version.clock,
                r.version.node,
                r.op,
                super::atom::format_time(r.updated_at),
                r.content
            ]);
            out.extend_from_slice(line.to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }
}
