#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn depex(db: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depex"))
        .arg("--db")
        .arg(db)
        .args(args)
        .env_remove("DEPEX_DB")
        .env_remove("DEPEX_TEST_ABORT_AT")
        .output()
        .expect("spawn depex")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf-8 stderr")
}

/// Runs a command that must succeed and returns its stdout.
pub fn ok(db: &Path, args: &[&str]) -> String {
    let o = depex(db, args);
    assert!(o.status.success(), "depex {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

pub fn json(db: &Path, args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(db, args)).expect("json output")
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = crate_dir().join("schemas").join(format!("{name}.schema.json"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&doc).expect("valid schema")
}

pub fn assert_valid(name: &str, value: &serde_json::Value) {
    let v = schema(name);
    let errors: Vec<String> = v.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{value:#}");
}

/// The reference sysroot scanned into a fresh database as snapshot `s1`.
pub fn reference_db() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    depex_core::fixture::reference_sysroot(&root).unwrap();
    let db = dir.path().join("corpus.db");
    ok(&db, &["scan", "--sysroot", root.to_str().unwrap(), "--label", "s1"]);
    (dir, root, db)
}
