use std::collections::BTreeMap;
use std::path::Path;

use rusqlite::Connection;
use serde_json::{json, Value};

use depex_core::fixture::reference_sysroot;

use crate::common::{crate_dir, depex, ok, stderr};
use crate::Verdict;

/// (canonical path, kind, soname)
const FILES: [(&str, &str, Option<&str>); 10] = [
    ("/opt/app/bin/app", "executable", None),
    ("/opt/app/lib/libapp.so", "library", Some("libapp.so")),
    ("/opt/app/lib/libutil.so.1", "library", Some("libutil.so.1")),
    ("/usr/bin/sh", "executable", None),
    ("/usr/bin/tool", "executable", None),
    ("/usr/lib/libc.so.6", "library", Some("libc.so.6")),
    ("/usr/lib/libgui.so.2", "library", Some("libgui.so.2")),
    ("/usr/lib/libm.so.6", "library", Some("libm.so.6")),
    ("/usr/lib/libunused.so.3", "library", Some("libunused.so.3")),
    ("/usr/lib/libz.so.1", "library", Some("libz.so.1")),
];

const ALIASES: [(&str, &str); 2] = [("/usr/bin/sh", "/bin/sh"), ("/usr/bin/tool", "/bin/tool")];

/// (dependent, needed name, target, origin)
const DEPS: [(&str, &str, Option<&str>, Option<&str>); 15] = [
    ("/opt/app/bin/app", "libapp.so", Some("/opt/app/lib/libapp.so"), Some("runpath")),
    ("/opt/app/bin/app", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/opt/app/bin/app", "libgui.so.2", Some("/usr/lib/libgui.so.2"), Some("default_dir")),
    ("/opt/app/lib/libapp.so", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/opt/app/lib/libapp.so", "libutil.so.1", Some("/opt/app/lib/libutil.so.1"), Some("ldso_conf")),
    ("/opt/app/lib/libutil.so.1", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/bin/sh", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/bin/tool", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/bin/tool", "libghost.so.9", None, None),
    ("/usr/bin/tool", "libz.so.1", Some("/usr/lib/libz.so.1"), Some("default_dir")),
    ("/usr/lib/libgui.so.2", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/lib/libgui.so.2", "libm.so.6", Some("/usr/lib/libm.so.6"), Some("default_dir")),
    ("/usr/lib/libm.so.6", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/lib/libunused.so.3", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
    ("/usr/lib/libz.so.1", "libc.so.6", Some("/usr/lib/libc.so.6"), Some("default_dir")),
];

fn expected_state(root: &Path) -> Value {
    let files: Vec<Value> = FILES
        .iter()
        .map(|(path, kind, soname)| {
            let size = std::fs::metadata(root.join(path.trim_start_matches('/'))).unwrap().len();
            json!({"path": path, "kind": kind, "soname": soname, "size_bytes": size})
        })
        .collect();
    let aliases: Vec<Value> = ALIASES.iter().map(|(p, a)| json!([p, a])).collect();
    let deps: Vec<Value> = DEPS.iter().map(|(f, n, t, o)| json!([f, n, t, o])).collect();
    json!({"files": files, "aliases": aliases, "deps": deps})
}

/// Every row of one snapshot with ids and timestamps replaced by paths.
fn db_state(db: &Path, label: &str) -> Value {
    let conn = Connection::open(db).unwrap();
    let sid: i64 = conn.query_row("SELECT id FROM snapshots WHERE label = ?1", [label], |r| r.get(0)).unwrap();
    let mut stmt = conn.prepare("SELECT canonical_path, kind, soname, size_bytes FROM files WHERE snapshot_id = ?1 ORDER BY canonical_path").unwrap();
    let files: Vec<Value> = stmt
        .query_map([sid], |r| {
            Ok(json!({"path": r.get::<_, String>(0)?, "kind": r.get::<_, String>(1)?, "soname": r.get::<_, Option<String>>(2)?, "size_bytes": r.get::<_, i64>(3)?}))
        })
        .unwrap()
        .map(Result::unwrap)
        .collect();
    let mut stmt = conn
        .prepare(
            "SELECT f.canonical_path, a.alias_path FROM file_aliases a JOIN files f ON f.id = a.file_id
             WHERE f.snapshot_id = ?1 ORDER BY 1, 2",
        )
        .unwrap();
    let aliases: Vec<Value> = stmt.query_map([sid], |r| Ok(json!([r.get::<_, String>(0)?, r.get::<_, String>(1)?]))).unwrap().map(Result::unwrap).collect();
    let mut stmt = conn
        .prepare(
            "SELECT f.canonical_path, d.needed_name, t.canonical_path, d.origin FROM deps d
             JOIN files f ON f.id = d.from_file LEFT JOIN files t ON t.id = d.to_file
             WHERE d.snapshot_id = ?1 ORDER BY 1, 2",
        )
        .unwrap();
    let deps: Vec<Value> = stmt
        .query_map([sid], |r| {
            Ok(json!([r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, Option<String>>(2)?, r.get::<_, Option<String>>(3)?]))
        })
        .unwrap()
        .map(Result::unwrap)
        .collect();
    json!({"files": files, "aliases": aliases, "deps": deps})
}

fn first_difference(got: &Value, want: &Value) -> String {
    for key in ["files", "aliases", "deps"] {
        let (g, w) = (got[key].as_array().unwrap(), want[key].as_array().unwrap());
        if g.len() != w.len() {
            return format!("{key}: {} rows, expected {}", g.len(), w.len());
        }
        if let Some((a, b)) = g.iter().zip(w).find(|(a, b)| a != b) {
            return format!("{key}: got {a}, expected {b}");
        }
    }
    "none".into()
}

pub fn end_to_end() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    reference_sysroot(&root).unwrap();
    let db = dir.path().join("golden.db");
    let root_arg = root.to_str().unwrap();
    ok(&db, &["scan", "--sysroot", root_arg, "--label", "first"]);

    let want = expected_state(&root);
    let first = db_state(&db, "first");
    let mut problems = Vec::new();
    if first != want {
        problems.push(format!("database rows differ from the hand table: {}", first_difference(&first, &want)));
    }

    let golden = std::fs::read_to_string(crate_dir().join("tests/golden/reference.dot")).unwrap();
    let dot = ok(&db, &["dot", "--snapshot", "first"]);
    if dot != golden {
        problems.push("dot output differs from tests/golden/reference.dot".into());
    }

    let second = depex(&db, &["scan", "--sysroot", root_arg, "--label", "second"]);
    if !second.status.success() {
        problems.push(format!("rescan failed: {}", stderr(&second)));
    } else if db_state(&db, "second") != first {
        problems.push("rescan produced a different logical state".into());
    }

    let stats: BTreeMap<String, Value> = serde_json::from_str(&ok(&db, &["stats", "--snapshot", "first", "--json"])).unwrap();
    let stats_want: BTreeMap<String, Value> = serde_json::from_value(json!({
        "executables": 3, "libraries": 7, "dependencies": 15, "missing": 1, "unused": 1,
        "avg_direct": 1.5, "avg_recursive": 1.6, "max_direct": 3, "max_recursive": 5
    }))
    .unwrap();
    if stats != stats_want {
        problems.push(format!("stats differ: {stats:?}"));
    }

    let detail = format!("10 files, 2 aliases, 15 deps, golden DOT and rescan compared; {} problems", problems.len());
    match problems.first() {
        Some(p) => Verdict::fail(format!("{detail}; first: {p}")),
        None => Verdict::pass(detail),
    }
}
