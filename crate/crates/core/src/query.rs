//! Forward and reverse dependency queries, name lookup and DOT emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::elf::FileKind;
use crate::graph::{DependencyGraph, GraphError, NodeId};
use crate::metrics::popularity;
use crate::resolve::Origin;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepEntry {
    pub needed_name: String,
    /// `None` for a missing dependency.
    pub target: Option<NodeId>,
    pub origin: Option<Origin>,
}

/// Direct dependencies in `DT_NEEDED` order.
pub fn get_deps(graph: &DependencyGraph, node: NodeId) -> Result<Vec<DepEntry>, GraphError> {
    Ok(graph
        .outgoing(node)?
        .map(|e| DepEntry { needed_name: e.needed_name.clone(), target: e.to, origin: e.origin })
        .collect())
}

/// The resolved transitive closure, the same set recursive coupling counts.
pub fn get_all_deps(graph: &DependencyGraph, node: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
    graph.reachable_from(node)
}

pub fn who_uses(graph: &DependencyGraph, library: NodeId, transitive: bool) -> Result<BTreeSet<NodeId>, GraphError> {
    if transitive {
        graph.reverse_reachable(library)
    } else {
        Ok(graph.incoming(library)?.map(|e| e.from).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpdateImpact {
    pub direct: BTreeSet<NodeId>,
    pub transitive: BTreeSet<NodeId>,
    pub executables_affected: BTreeSet<NodeId>,
}

pub fn update_impact(graph: &DependencyGraph, library: NodeId) -> Result<UpdateImpact, GraphError> {
    let direct = who_uses(graph, library, false)?;
    let transitive = who_uses(graph, library, true)?;
    let executables_affected = transitive.iter().copied().filter(|&id| graph.kind(id) == FileKind::ExecutableBinary).collect();
    Ok(UpdateImpact { direct, transitive, executables_affected })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LookupError {
    #[error("no file matches {0:?}")]
    NotFound(String),
    #[error("{name:?} is ambiguous: {}", candidates.join(", "))]
    Ambiguous { name: String, candidates: Vec<String> },
}

/// Finds a node by soname, then exact canonical or alias path, then
/// canonical path suffix on a `/` boundary.
pub fn lookup(graph: &DependencyGraph, name: &str) -> Result<NodeId, LookupError> {
    let pick = |hits: Vec<NodeId>| -> Option<Result<NodeId, LookupError>> {
        match hits.len() {
            0 => None,
            1 => Some(Ok(hits[0])),
            _ => {
                let mut candidates: Vec<String> = hits.iter().map(|&id| graph.nodes()[id.0].canonical_path.clone()).collect();
                candidates.sort();
                Some(Err(LookupError::Ambiguous { name: name.to_owned(), candidates }))
            }
        }
    };
    let nodes = graph.nodes();
    let by = |f: &dyn Fn(&crate::graph::Node) -> bool| -> Vec<NodeId> {
        nodes.iter().enumerate().filter(|(_, n)| f(n)).map(|(i, _)| NodeId(i)).collect()
    };
    if let Some(r) = pick(by(&|n| n.soname.as_deref() == Some(name))) {
        return r;
    }
    if let Some(r) = pick(by(&|n| n.canonical_path == name)) {
        return r;
    }
    if let Some(r) = pick(by(&|n| n.alias_paths.iter().any(|a| a == name))) {
        return r;
    }
    let suffix = name.trim_start_matches('/');
    if !suffix.is_empty() {
        let tail = format!("/{suffix}");
        if let Some(r) = pick(by(&|n| n.canonical_path.ends_with(&tail))) {
            return r;
        }
    }
    Err(LookupError::NotFound(name.to_owned()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DotOptions {
    /// Hide this many of the most imported nodes.
    pub hide_top_k: usize,
    /// Hide nodes whose path contains any of these.
    pub hide_names: Vec<String>,
    /// Restrict output to what these nodes reach, themselves included.
    pub roots: Vec<NodeId>,
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Nodes hidden by the popularity and name filters.
pub fn hidden_nodes(graph: &DependencyGraph, options: &DotOptions) -> BTreeSet<NodeId> {
    let pop = popularity(graph);
    let mut ranked: Vec<NodeId> = graph.ids().collect();
    ranked.sort_by(|a, b| pop[b].cmp(&pop[a]).then_with(|| graph.nodes()[a.0].canonical_path.cmp(&graph.nodes()[b.0].canonical_path)));
    let mut hidden: BTreeSet<NodeId> = ranked.into_iter().take(options.hide_top_k).collect();
    for id in graph.ids() {
        let path = &graph.nodes()[id.0].canonical_path;
        if options.hide_names.iter().any(|s| path.contains(s.as_str())) {
            hidden.insert(id);
        }
    }
    hidden
}

/// Deterministic DOT rendering of the graph after filtering.
pub fn emit_dot(graph: &DependencyGraph, options: &DotOptions) -> Result<String, GraphError> {
    let mut keep: BTreeSet<NodeId> = if options.roots.is_empty() {
        graph.ids().collect()
    } else {
        let mut set = BTreeSet::new();
        for &root in &options.roots {
            set.extend(graph.reachable_from(root)?);
            set.insert(root);
        }
        set
    };
    for id in hidden_nodes(graph, options) {
        keep.remove(&id);
    }
    let mut order: Vec<NodeId> = keep.iter().copied().collect();
    order.sort_by(|a, b| graph.nodes()[a.0].canonical_path.cmp(&graph.nodes()[b.0].canonical_path));

    let mut edges: Vec<(String, String)> = Vec::new();
    let mut missing: BTreeSet<&str> = BTreeSet::new();
    for &id in &order {
        let from = &graph.nodes()[id.0].canonical_path;
        for e in graph.outgoing(id)? {
            match e.to {
                Some(to) if keep.contains(&to) => edges.push((from.clone(), graph.nodes()[to.0].canonical_path.clone())),
                Some(_) => {}
                None => {
                    missing.insert(&e.needed_name);
                    edges.push((from.clone(), format!("missing:{}", e.needed_name)));
                }
            }
        }
    }
    edges.sort();
    edges.dedup();

    let mut out = String::from("digraph depex {\n");
    for &id in &order {
        let n = &graph.nodes()[id.0];
        let attrs = match n.kind {
            FileKind::ExecutableBinary => "shape=box",
            FileKind::SharedLibrary => "shape=ellipse",
            _ => "shape=diamond",
        };
        let label = n.soname.as_deref().unwrap_or_else(|| n.basename());
        writeln!(out, "  {} [label={}, {attrs}];", quote(&n.canonical_path), quote(label)).unwrap();
    }
    for name in &missing {
        writeln!(out, "  {} [label={}, shape=ellipse, style=dashed, color=red];", quote(&format!("missing:{name}")), quote(name))
            .unwrap();
    }
    for (from, to) in &edges {
        writeln!(out, "  {} -> {};", quote(from), quote(to)).unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}

/// Node paths by id, for rendering sets of ids.
pub fn paths(graph: &DependencyGraph, ids: &BTreeSet<NodeId>) -> Vec<String> {
    let mut v: Vec<String> = ids.iter().map(|id| graph.nodes()[id.0].canonical_path.clone()).collect();
    v.sort();
    v
}

/// Popularity keyed by canonical path.
pub fn popularity_by_path(graph: &DependencyGraph) -> BTreeMap<String, usize> {
    popularity(graph).into_iter().map(|(id, p)| (graph.nodes()[id.0].canonical_path.clone(), p)).collect()
}
