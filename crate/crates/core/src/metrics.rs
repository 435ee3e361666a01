//! Coupling, popularity, health and symbol coverage over a loaded graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::elf::{bare_symbol_name, ElfSummary, FileKind};
use crate::graph::{DependencyGraph, GraphError, NodeId};
use crate::par::{self, Parallelism};

/// Number of `DT_NEEDED` entries of `node`, resolved or not.
pub fn direct_coupling(graph: &DependencyGraph, node: NodeId) -> Result<usize, GraphError> {
    Ok(graph.outgoing(node)?.count())
}

/// Distinct nodes reachable from `node` over resolved edges, itself excluded.
pub fn recursive_coupling(graph: &DependencyGraph, node: NodeId) -> Result<usize, GraphError> {
    Ok(graph.reachable_from(node)?.len())
}

/// Distinct direct importers of every node.
pub fn popularity(graph: &DependencyGraph) -> BTreeMap<NodeId, usize> {
    graph
        .ids()
        .map(|id| {
            let importers: BTreeSet<NodeId> = graph.incoming(id).expect("own id").map(|e| e.from).collect();
            (id, importers.len())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Coupling {
    pub direct: usize,
    pub recursive: usize,
}

pub type CouplingReport = BTreeMap<NodeId, Coupling>;

/// Direct and recursive coupling of every node.
pub fn coupling_report(graph: &DependencyGraph, parallelism: Parallelism) -> CouplingReport {
    let ids: Vec<NodeId> = graph.ids().collect();
    let values = par::map(parallelism, &ids, |&id| Coupling {
        direct: direct_coupling(graph, id).expect("own id"),
        recursive: recursive_coupling(graph, id).expect("own id"),
    });
    ids.into_iter().zip(values).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HealthReport {
    /// Needed names that no edge of the snapshot resolves.
    pub missing_names: BTreeSet<String>,
    /// Nodes with at least one unresolved dependency.
    pub directly_impacted: BTreeSet<NodeId>,
    /// Shared libraries nothing imports.
    pub unused_libraries: BTreeSet<NodeId>,
}

pub fn health(graph: &DependencyGraph) -> HealthReport {
    let resolved_names: BTreeSet<&str> = graph.edges().iter().filter(|e| e.to.is_some()).map(|e| e.needed_name.as_str()).collect();
    let mut report = HealthReport::default();
    for (from, name) in graph.missing() {
        report.directly_impacted.insert(*from);
        if !resolved_names.contains(name.as_str()) {
            report.missing_names.insert(name.clone());
        }
    }
    for id in graph.ids() {
        if graph.kind(id) == FileKind::SharedLibrary && graph.incoming(id).expect("own id").next().is_none() {
            report.unused_libraries.insert(id);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub satisfied: BTreeSet<String>,
    /// Satisfied names the dependent imports weakly.
    pub optional: BTreeSet<String>,
    pub satisfied_count: usize,
    pub library_export_count: usize,
    /// Absent when the library exports nothing.
    pub coverage_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Keyed by (dependent, library) for every resolved edge.
    pub rows: BTreeMap<(NodeId, NodeId), CoverageRow>,
    /// Imports no resolved dependency exports, per dependent; weak imports
    /// are left out.
    pub unsatisfied_symbols: BTreeMap<NodeId, BTreeSet<String>>,
}

fn bare_names(set: &BTreeSet<String>) -> BTreeSet<String> {
    set.iter().map(|s| bare_symbol_name(s).to_owned()).collect()
}

/// Symbol-level reliance of each dependent on each library it loads.
/// Nodes without a summary, or dependents importing nothing, produce no rows.
pub fn coverage(graph: &DependencyGraph, summaries: &BTreeMap<NodeId, ElfSummary>) -> CoverageReport {
    let mut report = CoverageReport::default();
    for id in graph.ids() {
        let Some(summary) = summaries.get(&id) else { continue };
        let imports = bare_names(&summary.undefined_symbols);
        if imports.is_empty() {
            continue;
        }
        let weak = bare_names(&summary.weak_undefined);
        let mut covered = BTreeSet::new();
        for e in graph.outgoing(id).expect("own id") {
            let Some(to) = e.to else { continue };
            let Some(lib) = summaries.get(&to) else { continue };
            let exports = bare_names(&lib.exported_symbols);
            let satisfied: BTreeSet<String> = imports.intersection(&exports).cloned().collect();
            covered.extend(satisfied.iter().cloned());
            let row = CoverageRow {
                optional: satisfied.intersection(&weak).cloned().collect(),
                satisfied_count: satisfied.len(),
                library_export_count: exports.len(),
                coverage_ratio: (!exports.is_empty()).then(|| satisfied.len() as f64 / exports.len() as f64),
                satisfied,
            };
            report.rows.insert((id, to), row);
        }
        let unsatisfied: BTreeSet<String> = imports.difference(&covered).filter(|s| !weak.contains(*s)).cloned().collect();
        if !unsatisfied.is_empty() {
            report.unsatisfied_symbols.insert(id, unsatisfied);
        }
    }
    report
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StatsSummary {
    pub executables: usize,
    pub libraries: usize,
    /// All `DT_NEEDED` edges, resolved or not.
    pub dependencies: usize,
    /// Distinct unresolvable names.
    pub missing: usize,
    pub unused: usize,
    pub avg_direct: f64,
    pub avg_recursive: f64,
    pub max_direct: usize,
    pub max_recursive: usize,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn stats_summary(graph: &DependencyGraph) -> StatsSummary {
    stats_summary_with(graph, Parallelism::Auto)
}

/// Aggregates over executables and libraries together; other ELF objects
/// are left out of the averages and maxima.
pub fn stats_summary_with(graph: &DependencyGraph, parallelism: Parallelism) -> StatsSummary {
    let coupling = coupling_report(graph, parallelism);
    let health = health(graph);
    let population: Vec<&Coupling> = coupling
        .iter()
        .filter(|(id, _)| matches!(graph.kind(**id), FileKind::ExecutableBinary | FileKind::SharedLibrary))
        .map(|(_, c)| c)
        .collect();
    let avg = |f: fn(&Coupling) -> usize| {
        if population.is_empty() {
            0.0
        } else {
            round2(population.iter().map(|c| f(c)).sum::<usize>() as f64 / population.len() as f64)
        }
    };
    StatsSummary {
        executables: graph.nodes().iter().filter(|n| n.kind == FileKind::ExecutableBinary).count(),
        libraries: graph.nodes().iter().filter(|n| n.kind == FileKind::SharedLibrary).count(),
        dependencies: graph.edges().len(),
        missing: health.missing_names.len(),
        unused: health.unused_libraries.len(),
        avg_direct: avg(|c| c.direct),
        avg_recursive: avg(|c| c.recursive),
        max_direct: population.iter().map(|c| c.direct).max().unwrap_or(0),
        max_recursive: population.iter().map(|c| c.recursive).max().unwrap_or(0),
    }
}
