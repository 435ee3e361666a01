use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use depex_core::elf::FileKind;
use depex_core::fixture::reference_sysroot;
use depex_core::graph::{DependencyGraph, Edge, Node, NodeId};
use depex_core::metrics::{coupling_report, direct_coupling, health, popularity, recursive_coupling};
use depex_core::par::Parallelism;
use depex_core::query::get_all_deps;
use depex_core::resolve::{Origin, SearchConfig};
use depex_core::scan::{scan_tree, PluginRegistry, ScanOptions};

use crate::Verdict;

/// Random graph with cycles and self-loops allowed. Each resolved edge gets
/// a needed name unique to its target, so no two names share a target.
fn random_graph(rng: &mut StdRng) -> DependencyGraph {
    let n = rng.gen_range(1..=50);
    let density: f64 = rng.gen_range(0.0..=0.3);
    let nodes = (0..n)
        .map(|i| {
            let kind = match rng.gen_range(0..10) {
                0..=2 => FileKind::ExecutableBinary,
                3 => FileKind::ElfOther,
                _ => FileKind::SharedLibrary,
            };
            Node::new(format!("/n/{i}"), kind)
        })
        .collect();
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if rng.gen_bool(density) {
                edges.push(Edge::resolved(NodeId(from), format!("lib{to}.so"), NodeId(to), Origin::DefaultDir));
            }
        }
        for m in 0..rng.gen_range(0..3) {
            if rng.gen_bool(0.3) {
                edges.push(Edge::missing(NodeId(from), format!("libgone{m}.so")));
            }
        }
    }
    DependencyGraph::new(nodes, edges).unwrap()
}

/// Transitive closure by Warshall's algorithm over an adjacency matrix.
fn warshall(graph: &DependencyGraph) -> Vec<Vec<bool>> {
    let n = graph.len();
    let mut m = vec![vec![false; n]; n];
    for e in graph.edges() {
        if let Some(to) = e.to {
            m[e.from.0][to.0] = true;
        }
    }
    for k in 0..n {
        let via = m[k].clone();
        for row in m.iter_mut() {
            if row[k] {
                for (cell, &hop) in row.iter_mut().zip(&via) {
                    *cell |= hop;
                }
            }
        }
    }
    m
}

pub fn brute_force_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0xc0ff_ee01);
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut nodes_checked = 0;
    for g in 0..100 {
        let graph = random_graph(&mut rng);
        let closure = warshall(&graph);
        let report = coupling_report(&graph, Parallelism::Auto);
        let sequential = coupling_report(&graph, Parallelism::Sequential);
        if report != sequential {
            failures.push(format!("graph {g}: parallel and sequential coupling differ"));
        }
        for id in graph.ids() {
            nodes_checked += 1;
            let want: BTreeSet<NodeId> = (0..graph.len()).filter(|&j| j != id.0 && closure[id.0][j]).map(NodeId).collect();
            let got = get_all_deps(&graph, id).unwrap();
            if got != want {
                failures.push(format!("graph {g} node {}: get_all_deps {:?}, closure {:?}", id.0, got, want));
            }
            if recursive_coupling(&graph, id).unwrap() != want.len() || report[&id].recursive != want.len() {
                failures.push(format!("graph {g} node {}: recursive coupling disagrees with closure", id.0));
            }
            let out_degree = graph.edges().iter().filter(|e| e.from == id).count();
            if direct_coupling(&graph, id).unwrap() != out_degree || report[&id].direct != out_degree {
                failures.push(format!("graph {g} node {}: direct coupling disagrees with out-degree", id.0));
            }
        }
        let total: usize = popularity(&graph).values().sum();
        if total != graph.resolved_edge_count() {
            failures.push(format!("graph {g}: popularity sum {total} != resolved edges {}", graph.resolved_edge_count()));
        }
    }
    let elapsed = started.elapsed();
    let detail = format!("100 graphs, {nodes_checked} nodes, {} mismatches, {:.3}s", failures.len(), elapsed.as_secs_f64());
    match failures.first() {
        Some(first) => Verdict::fail(format!("{detail}; first: {first}")),
        None => Verdict::check(elapsed < Duration::from_secs(10), detail),
    }
}

fn identities(graph: &DependencyGraph) -> Result<(), String> {
    let h = health(graph);
    let targets: BTreeSet<NodeId> = graph.edges().iter().filter_map(|e| e.to).collect();
    if let Some(id) = h.unused_libraries.intersection(&targets).next() {
        return Err(format!("unused library {} has an importer", id.0));
    }
    let libraries: BTreeSet<NodeId> = graph.ids().filter(|&id| graph.kind(id) == FileKind::SharedLibrary).collect();
    if h.unused_libraries != &libraries - &targets {
        return Err("unused libraries are not libraries minus targets".into());
    }
    let from_missing: BTreeSet<NodeId> = graph.edges().iter().filter(|e| e.to.is_none()).map(|e| e.from).collect();
    if h.directly_impacted != from_missing {
        return Err("directly impacted differs from sources of missing edges".into());
    }
    let resolved: BTreeSet<&str> = graph.edges().iter().filter(|e| e.to.is_some()).map(|e| e.needed_name.as_str()).collect();
    let missing: BTreeSet<String> =
        graph.edges().iter().filter(|e| e.to.is_none() && !resolved.contains(e.needed_name.as_str())).map(|e| e.needed_name.clone()).collect();
    if h.missing_names != missing {
        return Err("missing names differ from unresolved names".into());
    }
    Ok(())
}

fn names(graph: &DependencyGraph, ids: &BTreeSet<NodeId>) -> BTreeSet<String> {
    ids.iter().map(|&id| graph.node(id).unwrap().basename().to_owned()).collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn hand_fixtures() -> Result<(), String> {
    let lib = |p: &str| Node::new(p, FileKind::SharedLibrary);
    let exe = |p: &str| Node::new(p, FileKind::ExecutableBinary);

    // One missing name shared by three dependents.
    let shared = DependencyGraph::new(
        vec![exe("/a"), exe("/b"), lib("/c"), lib("/d")],
        vec![
            Edge::missing(NodeId(0), "libx.so"),
            Edge::missing(NodeId(1), "libx.so"),
            Edge::missing(NodeId(2), "libx.so"),
            Edge::resolved(NodeId(0), "libd.so", NodeId(3), Origin::DefaultDir),
        ],
    )
    .unwrap();
    let h = health(&shared);
    if h.missing_names != set(&["libx.so"]) || names(&shared, &h.directly_impacted) != set(&["a", "b", "c"]) {
        return Err(format!("shared missing name: {h:?}"));
    }
    if names(&shared, &h.unused_libraries) != set(&["c"]) {
        return Err(format!("shared missing name unused: {h:?}"));
    }

    // One dependent with three missing names.
    let single = DependencyGraph::new(
        vec![exe("/a"), lib("/b")],
        vec![
            Edge::missing(NodeId(0), "libx.so"),
            Edge::missing(NodeId(0), "liby.so"),
            Edge::missing(NodeId(0), "libz.so"),
            Edge::resolved(NodeId(0), "libb.so", NodeId(1), Origin::DefaultDir),
        ],
    )
    .unwrap();
    let h = health(&single);
    if h.missing_names != set(&["libx.so", "liby.so", "libz.so"]) || names(&single, &h.directly_impacted) != set(&["a"]) || !h.unused_libraries.is_empty() {
        return Err(format!("single dependent: {h:?}"));
    }

    let dir = tempfile::tempdir().unwrap();
    reference_sysroot(dir.path()).map_err(|e| e.to_string())?;
    let options = ScanOptions::new(SearchConfig::new(dir.path()).unwrap());
    let graph = scan_tree(&options, &PluginRegistry::with_elf()).map_err(|e| e.to_string())?.to_graph();
    let h = health(&graph);
    if h.missing_names != set(&["libghost.so.9"])
        || names(&graph, &h.directly_impacted) != set(&["tool"])
        || names(&graph, &h.unused_libraries) != set(&["libunused.so.3"])
    {
        return Err(format!("reference sysroot: {h:?}"));
    }
    identities(&graph)
}

pub fn health_identities() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x4ea1_7401);
    let mut failures = Vec::new();
    for g in 0..50 {
        let graph = random_graph(&mut rng);
        if let Err(e) = identities(&graph) {
            failures.push(format!("graph {g}: {e}"));
        }
    }
    if let Err(e) = hand_fixtures() {
        failures.push(e);
    }
    let detail = format!("50 random graphs and 3 hand fixtures, {} failures", failures.len());
    match failures.first() {
        Some(first) => Verdict::fail(format!("{detail}; first: {first}")),
        None => Verdict::pass(detail),
    }
}
