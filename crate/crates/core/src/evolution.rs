//! Trends and deltas across stored snapshots.
//!
//! Files are matched across snapshots by identity key: the soname when one
//! is recorded, the canonical path's basename otherwise.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::elf::FileKind;
use crate::graph::{DependencyGraph, Node};
use crate::metrics::stats_summary;
use crate::store::{Store, StoreError};

pub fn identity_key(node: &Node) -> &str {
    node.soname.as_deref().unwrap_or_else(|| node.basename())
}

/// Columns in this order are the CSV header of `depex evolve`.
pub const TREND_COLUMNS: [&str; 12] = [
    "label",
    "executables",
    "libraries",
    "files_total",
    "dependencies",
    "missing",
    "unused",
    "unused_fraction",
    "avg_direct",
    "avg_recursive",
    "max_direct",
    "max_recursive",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub label: String,
    pub executables: usize,
    pub libraries: usize,
    /// ELF nodes of every kind.
    pub files_total: usize,
    pub dependencies: usize,
    pub missing: usize,
    pub unused: usize,
    pub unused_fraction: f64,
    pub avg_direct: f64,
    pub avg_recursive: f64,
    pub max_direct: usize,
    pub max_recursive: usize,
}

impl TrendRow {
    pub fn from_graph(label: &str, graph: &DependencyGraph) -> Self {
        let s = stats_summary(graph);
        TrendRow {
            label: label.to_owned(),
            executables: s.executables,
            libraries: s.libraries,
            files_total: graph.len(),
            dependencies: s.dependencies,
            missing: s.missing,
            unused: s.unused,
            unused_fraction: if s.libraries == 0 { 0.0 } else { s.unused as f64 / s.libraries as f64 },
            avg_direct: s.avg_direct,
            avg_recursive: s.avg_recursive,
            max_direct: s.max_direct,
            max_recursive: s.max_recursive,
        }
    }

    /// Values in [`TREND_COLUMNS`] order.
    pub fn csv_fields(&self) -> [String; 12] {
        [
            self.label.clone(),
            self.executables.to_string(),
            self.libraries.to_string(),
            self.files_total.to_string(),
            self.dependencies.to_string(),
            self.missing.to_string(),
            self.unused.to_string(),
            self.unused_fraction.to_string(),
            self.avg_direct.to_string(),
            self.avg_recursive.to_string(),
            self.max_direct.to_string(),
            self.max_recursive.to_string(),
        ]
    }
}

pub type TrendReport = Vec<TrendRow>;

/// Requested labels in snapshot natural order, duplicates dropped.
fn ordered_labels(store: &Store, labels: &[String]) -> Result<Vec<String>, StoreError> {
    let all = store.list_snapshots()?;
    let known: BTreeSet<&str> = all.iter().map(|s| s.label.as_str()).collect();
    if let Some(bad) = labels.iter().find(|l| !known.contains(l.as_str())) {
        return Err(StoreError::UnknownLabel(bad.clone()));
    }
    let wanted: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    Ok(all.into_iter().map(|s| s.label).filter(|l| wanted.contains(l.as_str())).collect())
}

pub fn trend_report(store: &Store, labels: &[String]) -> Result<TrendReport, StoreError> {
    ordered_labels(store, labels)?.iter().map(|l| Ok(TrendRow::from_graph(l, &store.load_graph(l)?))).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SnapshotDelta {
    pub added_libraries: BTreeSet<String>,
    pub removed_libraries: BTreeSet<String>,
    pub added_executables: BTreeSet<String>,
    pub removed_executables: BTreeSet<String>,
    /// Identity keys present in both snapshots.
    pub persistent_nodes: BTreeSet<String>,
}

impl SnapshotDelta {
    pub fn is_empty(&self) -> bool {
        self.added_libraries.is_empty()
            && self.removed_libraries.is_empty()
            && self.added_executables.is_empty()
            && self.removed_executables.is_empty()
    }
}

fn keys(graph: &DependencyGraph, kind: Option<FileKind>) -> BTreeSet<String> {
    graph.nodes().iter().filter(|n| kind.is_none_or(|k| n.kind == k)).map(|n| identity_key(n).to_owned()).collect()
}

pub fn diff_graphs(a: &DependencyGraph, b: &DependencyGraph) -> SnapshotDelta {
    let diff = |x: &BTreeSet<String>, y: &BTreeSet<String>| x.difference(y).cloned().collect();
    let (la, lb) = (keys(a, Some(FileKind::SharedLibrary)), keys(b, Some(FileKind::SharedLibrary)));
    let (ea, eb) = (keys(a, Some(FileKind::ExecutableBinary)), keys(b, Some(FileKind::ExecutableBinary)));
    SnapshotDelta {
        added_libraries: diff(&lb, &la),
        removed_libraries: diff(&la, &lb),
        added_executables: diff(&eb, &ea),
        removed_executables: diff(&ea, &eb),
        persistent_nodes: keys(a, None).intersection(&keys(b, None)).cloned().collect(),
    }
}

pub fn diff_snapshots(store: &Store, label_a: &str, label_b: &str) -> Result<SnapshotDelta, StoreError> {
    Ok(diff_graphs(&store.load_graph(label_a)?, &store.load_graph(label_b)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Longevity {
    pub first_seen: String,
    pub last_seen: String,
    pub present_count: usize,
}

pub fn longevity(store: &Store, labels: &[String]) -> Result<BTreeMap<String, Longevity>, StoreError> {
    let mut out: BTreeMap<String, Longevity> = BTreeMap::new();
    for label in ordered_labels(store, labels)? {
        for key in keys(&store.load_graph(&label)?, None) {
            out.entry(key)
                .and_modify(|l| {
                    l.last_seen = label.clone();
                    l.present_count += 1;
                })
                .or_insert_with(|| Longevity { first_seen: label.clone(), last_seen: label.clone(), present_count: 1 });
        }
    }
    Ok(out)
}
