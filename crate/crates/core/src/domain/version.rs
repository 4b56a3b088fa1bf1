use serde::{Deserialize, Serialize};
use std::fmt;

/// Name of a replica (clinic desktop, PDA, pharmacy server...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(raw: impl Into<String>) -> Self {
        Self(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(raw: &str) -> Self {
        Self(raw.to_owned())
    }
}

/// Resource version: a Lamport clock value tagged with the writing node.
///
/// Ordered lexicographically on `(clock, node)`, so two writes with the same
/// clock are broken by the larger node id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Version {
    pub clock: u64,
    pub node: NodeId,
}

impl Version {
    pub fn new(clock: u64, node: impl Into<NodeId>) -> Self {
        Self { clock, node: node.into() }
    }
}

impl From<String> for NodeId {
    fn from(raw: String) -> Self {
        Self(raw)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.clock, self.node)
    }
}

#[derive(Debug, Clone)]
pub struct LamportClock {
    node: NodeId,
    counter: u64,
}

impl LamportClock {
    pub fn new(node: NodeId) -> Self {
        Self { node, counter: 0 }
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn current(&self) -> u64 {
        self.counter
    }

    pub fn tick(&mut self) -> Version {
        self.counter += 1;
        Version::new(self.counter, self.node.clone())
    }

    /// Version for a write that supersedes `previous`.
    pub fn tick_after(&mut self, previous: &Version) -> Version {
        self.observe(previous.clock);
        self.tick()
    }

    pub fn observe(&mut self, clock: u64) {
        self.counter = self.counter.max(clock);
    }
}
