//! In-memory presence-dependency graph with a precomputed transpose.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::elf::FileKind;
use crate::resolve::Origin;

/// Dense index of a node inside one [`DependencyGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub canonical_path: String,
    pub alias_paths: Vec<String>,
    pub kind: FileKind,
    pub soname: Option<String>,
    pub size_bytes: u64,
}

impl Node {
    pub fn new(canonical_path: impl Into<String>, kind: FileKind) -> Self {
        Node { canonical_path: canonical_path.into(), alias_paths: Vec::new(), kind, soname: None, size_bytes: 0 }
    }

    pub fn with_soname(mut self, soname: impl Into<String>) -> Self {
        self.soname = Some(soname.into());
        self
    }

    pub fn basename(&self) -> &str {
        self.canonical_path.rsplit('/').next().unwrap_or(&self.canonical_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub needed_name: String,
    /// `None` when the needed name did not resolve.
    pub to: Option<NodeId>,
    pub origin: Option<Origin>,
}

impl Edge {
    pub fn resolved(from: NodeId, needed_name: impl Into<String>, to: NodeId, origin: Origin) -> Self {
        Edge { from, needed_name: needed_name.into(), to: Some(to), origin: Some(origin) }
    }

    pub fn missing(from: NodeId, needed_name: impl Into<String>) -> Self {
        Edge { from, needed_name: needed_name.into(), to: None, origin: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {edge} references unknown node {node}")]
    DanglingEdge { edge: usize, node: NodeId },
    #[error("duplicate dependency {needed_name:?} from node {from}")]
    DuplicateEdge { from: NodeId, needed_name: String },
    #[error("node {0} is a NotElf file")]
    NotElfNode(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Nodes, edges, forward and reverse adjacency.
///
/// `outgoing(n)` lists edges in the order they were inserted, which for
/// scanned graphs is `DT_NEEDED` file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    reverse_adjacency: Vec<Vec<usize>>,
    missing: BTreeSet<(NodeId, String)>,
}

impl DependencyGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if let Some(n) = nodes.iter().find(|n| n.kind == FileKind::NotElf) {
            return Err(GraphError::NotElfNode(n.canonical_path.clone()));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut reverse_adjacency = vec![Vec::new(); nodes.len()];
        let mut missing = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for (i, e) in edges.iter().enumerate() {
            for node in std::iter::once(e.from).chain(e.to) {
                if node.0 >= nodes.len() {
                    return Err(GraphError::DanglingEdge { edge: i, node });
                }
            }
            if !seen.insert((e.from, e.needed_name.as_str())) {
                return Err(GraphError::DuplicateEdge { from: e.from, needed_name: e.needed_name.clone() });
            }
            adjacency[e.from.0].push(i);
            match e.to {
                Some(to) => reverse_adjacency[to.0].push(i),
                None => {
                    missing.insert((e.from, e.needed_name.clone()));
                }
            }
        }
        Ok(DependencyGraph { nodes, edges, adjacency, reverse_adjacency, missing })
    }

    pub fn empty() -> Self {
        DependencyGraph::new(Vec::new(), Vec::new()).unwrap()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(id.0).ok_or(GraphError::UnknownNode(id))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn outgoing(&self, id: NodeId) -> Result<impl Iterator<Item = &Edge> + '_, GraphError> {
        let list = self.adjacency.get(id.0).ok_or(GraphError::UnknownNode(id))?;
        Ok(list.iter().map(|&i| &self.edges[i]))
    }

    pub fn incoming(&self, id: NodeId) -> Result<impl Iterator<Item = &Edge> + '_, GraphError> {
        let list = self.reverse_adjacency.get(id.0).ok_or(GraphError::UnknownNode(id))?;
        Ok(list.iter().map(|&i| &self.edges[i]))
    }

    /// `(from, needed_name)` for every unresolved dependency.
    pub fn missing(&self) -> &BTreeSet<(NodeId, String)> {
        &self.missing
    }

    pub fn resolved_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.to.is_some()).count()
    }

    pub fn find_by_path(&self, path: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.canonical_path == path).map(NodeId)
    }

    pub fn kind(&self, id: NodeId) -> FileKind {
        self.nodes[id.0].kind
    }

    /// Distinct nodes reachable from `start` over resolved edges, never
    /// including `start` itself, even when it sits on a cycle.
    pub fn reachable_from(&self, start: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        self.node(start)?;
        Ok(self.bfs(start, |n| self.adjacency[n.0].iter().filter_map(|&i| self.edges[i].to)))
    }

    /// Distinct nodes that reach `target` over resolved edges, excluding it.
    pub fn reverse_reachable(&self, target: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        self.node(target)?;
        Ok(self.bfs(target, |n| self.reverse_adjacency[n.0].iter().map(|&i| self.edges[i].from)))
    }

    fn bfs<I>(&self, start: NodeId, next: impl Fn(NodeId) -> I) -> BTreeSet<NodeId>
    where
        I: Iterator<Item = NodeId>,
    {
        let mut visited = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        let mut found = BTreeSet::new();
        visited[start.0] = true;
        while let Some(n) = queue.pop_front() {
            for m in next(n) {
                if !visited[m.0] {
                    visited[m.0] = true;
                    found.insert(m);
                    queue.push_back(m);
                }
            }
        }
        found
    }

    /// Order-independent view used to compare graphs from different sources.
    pub fn logical_state(&self) -> LogicalGraph {
        let path = |id: NodeId| self.nodes[id.0].canonical_path.clone();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let mut aliases = n.alias_paths.clone();
                aliases.sort();
                (n.canonical_path.clone(), (n.kind, n.soname.clone(), n.size_bytes, aliases))
            })
            .collect();
        let mut edges = BTreeMap::new();
        for e in &self.edges {
            edges.insert((path(e.from), e.needed_name.clone()), (e.to.map(path), e.origin));
        }
        LogicalGraph { nodes, edges }
    }

    /// Maps every canonical and alias path to its node.
    pub fn path_index(&self) -> HashMap<&str, NodeId> {
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for p in &n.alias_paths {
                index.entry(p.as_str()).or_insert(NodeId(i));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            index.insert(n.canonical_path.as_str(), NodeId(i));
        }
        index
    }
}

/// Graph content keyed by paths instead of ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalGraph {
    pub nodes: BTreeMap<String, (FileKind, Option<String>, u64, Vec<String>)>,
    pub edges: BTreeMap<(String, String), (Option<String>, Option<Origin>)>,
}
