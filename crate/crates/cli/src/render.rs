//! Human and JSON output. JSON objects have sorted keys.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use depex_core::graph::{DependencyGraph, NodeId};
use depex_core::metrics::StatsSummary;
use depex_core::query::{paths, DepEntry, UpdateImpact};
use depex_core::scan::ScanResult;
use depex_core::store::Snapshot;

pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn path(graph: &DependencyGraph, id: NodeId) -> &str {
    &graph.nodes()[id.0].canonical_path
}

pub fn scan_json(snapshot: &Snapshot, result: &ScanResult) -> String {
    json(&json!({
        "snapshot": snapshot,
        "counts": result.counts,
        "duration_secs": result.duration_secs,
        "edges": result.edges.len(),
        "missing_edges": result.edges.iter().filter(|e| e.to.is_none()).count(),
        "warnings": result.warnings.len(),
    }))
}

pub fn scan_text(snapshot: &Snapshot, result: &ScanResult) -> String {
    let c = &result.counts;
    format!(
        "snapshot {} stored ({} files seen, {} ELF, {} executables, {} libraries, {} dependencies, {} errors) in {:.2}s\n",
        snapshot.label,
        c.files_seen,
        c.elf_parsed,
        c.executables,
        c.libraries,
        result.edges.len(),
        c.errors,
        result.duration_secs
    )
}

pub fn stats_text(label: &str, s: &StatsSummary) -> String {
    let rows: [(&str, String); 9] = [
        ("executables", s.executables.to_string()),
        ("libraries", s.libraries.to_string()),
        ("dependencies", s.dependencies.to_string()),
        ("missing", s.missing.to_string()),
        ("unused", s.unused.to_string()),
        ("avg_direct", format!("{:.2}", s.avg_direct)),
        ("avg_recursive", format!("{:.2}", s.avg_recursive)),
        ("max_direct", s.max_direct.to_string()),
        ("max_recursive", s.max_recursive.to_string()),
    ];
    let mut out = format!("snapshot {label}\n");
    for (k, v) in rows {
        writeln!(out, "  {k:<14} {v}").unwrap();
    }
    out
}

pub fn snapshots_text(list: &[Snapshot]) -> String {
    let mut out = String::new();
    for s in list {
        writeln!(out, "{}\t{}\t{}", s.label, s.scanned_at.to_rfc3339(), s.root_path).unwrap();
    }
    out
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

pub fn who_uses(graph: &DependencyGraph, target: NodeId, transitive: bool, users: &BTreeSet<NodeId>, as_json: bool) -> String {
    let users = paths(graph, users);
    if as_json {
        json(&json!({ "target": path(graph, target), "transitive": transitive, "users": users }))
    } else {
        lines(&users)
    }
}

pub fn get_deps(graph: &DependencyGraph, node: NodeId, deps: &[DepEntry], as_json: bool) -> String {
    if as_json {
        let deps: Vec<Value> = deps
            .iter()
            .map(|d| match d.target {
                Some(to) => json!({
                    "needed_name": d.needed_name,
                    "status": "resolved",
                    "path": path(graph, to),
                    "origin": d.origin.map(|o| o.as_str()),
                }),
                None => json!({ "needed_name": d.needed_name, "status": "missing", "path": null, "origin": null }),
            })
            .collect();
        return json(&json!({ "node": path(graph, node), "deps": deps }));
    }
    let mut out = String::new();
    for d in deps {
        match (d.target, d.origin) {
            (Some(to), Some(origin)) => writeln!(out, "{} => {} ({})", d.needed_name, path(graph, to), origin.as_str()),
            _ => writeln!(out, "{} => not found", d.needed_name),
        }
        .unwrap();
    }
    out
}

pub fn get_all_deps(graph: &DependencyGraph, node: NodeId, all: &BTreeSet<NodeId>, as_json: bool) -> String {
    let all = paths(graph, all);
    if as_json {
        json(&json!({ "node": path(graph, node), "deps": all }))
    } else {
        lines(&all)
    }
}

pub fn impact(graph: &DependencyGraph, node: NodeId, impact: &UpdateImpact, as_json: bool) -> String {
    let direct = paths(graph, &impact.direct);
    let transitive = paths(graph, &impact.transitive);
    let executables = paths(graph, &impact.executables_affected);
    if as_json {
        return json(&json!({
            "target": path(graph, node),
            "direct": direct,
            "transitive": transitive,
            "executables_affected": executables,
        }));
    }
    let mut out = String::new();
    for (title, list) in [("direct", &direct), ("transitive", &transitive), ("executables_affected", &executables)] {
        writeln!(out, "{title} ({}):", list.len()).unwrap();
        for p in list {
            writeln!(out, "  {p}").unwrap();
        }
    }
    out
}
