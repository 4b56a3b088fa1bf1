use super::{BrokerMessage, Endpoint, ServerBroker, Transport, TransportError};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

/// Fault-injection state of a simulated node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Up,
    /// Refuses connections.
    Down,
    /// Accepts the request and never answers.
    Hung,
    /// Processes the request, then the reply is lost.
    DropReplies,
}

struct Node {
    server: Arc<ServerBroker>,
    state: NodeState,
    deliveries: u64,
}

/// In-process transport between server brokers. Timeouts are reported
/// immediately instead of waiting for them to elapse.
#[derive(Default)]
pub struct LocalNetwork {
    nodes: RwLock<HashMap<Endpoint, Node>>,
}

impl LocalNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&self, endpoint: Endpoint, server: Arc<ServerBroker>) {
        self.nodes.write().unwrap().insert(
            endpoint,
            Node {
                server,
                state: NodeState::Up,
                deliveries: 0,
            },
        );
    }

    pub fn set_state(&self, endpoint: &Endpoint, state: NodeState) {
        if let Some(node) = self.nodes.write().unwrap().get_mut(endpoint) {
            node.state = state;
        }
    }

    pub fn state(&self, endpoint: &Endpoint) -> Option<NodeState> {
        self.nodes.read().unwrap().get(endpoint).map(|n| n.state)
    }

    /// Messages that reached the node's dispatcher.
    pub fn deliveries(&self, endpoint: &Endpoint) -> u64 {
        self.nodes.read().unwrap().get(endpoint).map_or(0, |n| n.deliveries)
    }
}

impl Transport for LocalNetwork {
    fn send(&self, endpoint: &Endpoint, msg: &BrokerMessage, _timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let (server, state) = {
            let mut nodes = self.nodes.write().unwrap();
            let node = nodes
                .get_mut(endpoint)
                .ok_or_else(|| TransportError::Unreachable(endpoint.to_string()))?;
            match node.state {
                NodeState::Down => return Err(TransportError::Unreachable(endpoint.to_string())),
                NodeState::Hung => return Err(TransportError::Timeout),
                NodeState::Up | NodeState::DropReplies => node.deliveries += 1,
            }
            (node.server.clone(), node.state)
        };
        // dispatch outside the lock so services may call back into the network
        let reply = server.dispatch(msg);
        match state {
            NodeState::DropReplies => Err(TransportError::Timeout),
            _ => reply.map_err(TransportError::Fault),
        }
    }

    fn reachable(&self, endpoint: &Endpoint) -> bool {
        matches!(self.state(endpoint), Some(NodeState::Up | NodeState::DropReplies))
    }
}
