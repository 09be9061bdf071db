//! Network description and validation.
//!
//! Node 0 is the source. Every other node is a cache fed by one or more
//! incoming links, each renewing with its own inter-update law.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::InterUpdateDistribution;

pub type NodeId = usize;

/// Index of a link in [`Network::links`].
pub type LinkId = usize;

pub const SOURCE: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("network must contain at least the source node")]
    Empty,
    #[error("link {link} ({from}->{to}) references a node outside 0..{node_count}")]
    NodeOutOfRange { link: LinkId, from: NodeId, to: NodeId, node_count: usize },
    #[error("link {link} is a self loop on node {node}")]
    SelfLoop { link: LinkId, node: NodeId },
    #[error("link {link} ({from}->0) points into the source")]
    LinkIntoSource { link: LinkId, from: NodeId },
    #[error("links {first} and {second} into node {node} share priority {priority}")]
    DuplicatePriority { node: NodeId, priority: u32, first: LinkId, second: LinkId },
    #[error("node {node} is not reachable from the source")]
    UnreachableNode { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("operation needs a tree network (one incoming link per cache)")]
    NotATree,
    #[error("node {node} is not in a network of {node_count} nodes")]
    UnknownNode { node: NodeId, node_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub dist: InterUpdateDistribution,
    /// Order among links into the same node when arrivals coincide; lower
    /// goes first.
    pub priority: u32,
}

impl Link {
    pub fn new(from: NodeId, to: NodeId, dist: InterUpdateDistribution, priority: u32) -> Self {
        Self { from, to, dist, priority }
    }
}

/// A validated cache-updating network. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkConfig", into = "NetworkConfig")]
pub struct Network {
    node_count: usize,
    links: Vec<Link>,
    incoming: Vec<Vec<LinkId>>,
    depth: Vec<u32>,
}

/// On-disk form: `{"nodes": 4, "links": [{"from":0,"to":1,"dist":{...},"priority":0}, ...]}`.
/// A missing priority defaults to the link's position in the list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: usize,
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: NodeId,
    pub to: NodeId,
    pub dist: InterUpdateDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
}

impl TryFrom<NetworkConfig> for Network {
    type Error = ValidationError;

    fn try_from(cfg: NetworkConfig) -> Result<Self, Self::Error> {
        let links = cfg
            .links
            .into_iter()
            .enumerate()
            .map(|(i, l)| Link::new(l.from, l.to, l.dist, l.priority.unwrap_or(i as u32)))
            .collect();
        Network::new(cfg.nodes, links)
    }
}

impl From<Network> for NetworkConfig {
    fn from(net: Network) -> Self {
        NetworkConfig {
            nodes: net.node_count,
            links: net
                .links
                .into_iter()
                .map(|l| LinkConfig { from: l.from, to: l.to, dist: l.dist, priority: Some(l.priority) })
                .collect(),
        }
    }
}

/// Checks every structural rule and reports the first one broken.
///
/// Rules are checked link by link in list order (range, self loop, link into
/// the source, duplicate priority), then reachability node by node.
pub fn validate(node_count: usize, links: &[Link]) -> Result<(), ValidationError> {
    if node_count == 0 {
        return Err(ValidationError::Empty);
    }
    // (priority, link) seen per receiving node
    let mut seen: Vec<Vec<(u32, LinkId)>> = vec![Vec::new(); node_count];
    for (id, l) in links.iter().enumerate() {
        if l.from >= node_count || l.to >= node_count {
            return Err(ValidationError::NodeOutOfRange { link: id, from: l.from, to: l.to, node_count });
        }
        if l.from == l.to {
            return Err(ValidationError::SelfLoop { link: id, node: l.from });
        }
        if l.to == SOURCE {
            return Err(ValidationError::LinkIntoSource { link: id, from: l.from });
        }
        if let Some(&(_, first)) = seen[l.to].iter().find(|(p, _)| *p == l.priority) {
            return Err(ValidationError::DuplicatePriority {
                node: l.to,
                priority: l.priority,
                first,
                second: id,
            });
        }
        seen[l.to].push((l.priority, id));
    }
    let depth = hop_depths(node_count, links);
    match depth.iter().position(|d| d.is_none()) {
        Some(node) => Err(ValidationError::UnreachableNode { node }),
        None => Ok(()),
    }
}

/// Breadth-first hop distance from the source; `None` where unreachable.
fn hop_depths(node_count: usize, links: &[Link]) -> Vec<Option<u32>> {
    let mut out: Vec<Vec<NodeId>> = vec![Vec::new(); node_count];
    for l in links {
        out[l.from].push(l.to);
    }
    let mut depth = vec![None; node_count];
    depth[SOURCE] = Some(0);
    let mut queue = VecDeque::from([SOURCE]);
    while let Some(n) = queue.pop_front() {
        let d = depth[n].unwrap();
        for &m in &out[n] {
            if depth[m].is_none() {
                depth[m] = Some(d + 1);
                queue.push_back(m);
            }
        }
    }
    depth
}

impl Network {
    pub fn new(node_count: usize, links: Vec<Link>) -> Result<Self, ValidationError> {
        validate(node_count, &links)?;
        let mut incoming = vec![Vec::new(); node_count];
        for (id, l) in links.iter().enumerate() {
            incoming[l.to].push(id);
        }
        for ids in &mut incoming {
            ids.sort_by_key(|&id| links[id].priority);
        }
        let depth = hop_depths(node_count, &links).into_iter().map(Option::unwrap).collect();
        Ok(Self { node_count, links, incoming, depth })
    }

    /// Linear network `0 -> 1 -> ... -> n` with `dists[i]` on link `(i, i+1)`.
    pub fn chain(dists: &[InterUpdateDistribution]) -> Self {
        let links = dists
            .iter()
            .enumerate()
            .map(|(i, d)| Link::new(i, i + 1, *d, 0))
            .collect();
        Self::new(dists.len() + 1, links).expect("a chain is always valid")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    /// Links into `node` (the set `S_j`), in priority order.
    pub fn incoming(&self, node: NodeId) -> &[LinkId] {
        &self.incoming[node]
    }

    /// Hop distance of `node` from the source.
    pub fn depth(&self, node: NodeId) -> u32 {
        self.depth[node]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node < self.node_count
    }

    /// Every cache has exactly one incoming link.
    pub fn is_tree(&self) -> bool {
        self.incoming.iter().skip(1).all(|ids| ids.len() == 1)
    }

    /// Links from the source down to `node`, source side first.
    pub fn path_to_source(&self, node: NodeId) -> Result<Vec<LinkId>, TopologyError> {
        if !self.contains(node) {
            return Err(TopologyError::UnknownNode { node, node_count: self.node_count });
        }
        if !self.is_tree() {
            return Err(TopologyError::NotATree);
        }
        let mut path = Vec::with_capacity(self.depth[node] as usize);
        let mut at = node;
        while at != SOURCE {
            let id = self.incoming[at][0];
            path.push(id);
            at = self.links[id].from;
        }
        path.reverse();
        Ok(path)
    }
}
