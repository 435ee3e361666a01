//! SQLite persistence of snapshots.
//!
//! All snapshots of a corpus share one database file. Writers take an
//! immediate transaction; read-only handles never write to the file.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, ErrorCode, OpenFlags, OptionalExtension, TransactionBehavior};
use serde::Serialize;

use crate::elf::FileKind;
use crate::graph::{DependencyGraph, Edge, Node, NodeId};
use crate::resolve::Origin;
use crate::scan::ScanResult;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS snapshots (
    id INTEGER PRIMARY KEY,
    label TEXT NOT NULL UNIQUE,
    root_path TEXT NOT NULL,
    scanned_at TEXT NOT NULL,
    tool_version TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS files (
    id INTEGER PRIMARY KEY,
    snapshot_id INTEGER NOT NULL REFERENCES snapshots(id),
    canonical_path TEXT NOT NULL,
    kind TEXT NOT NULL CHECK (kind IN ('executable', 'library', 'other')),
    soname TEXT,
    size_bytes INTEGER NOT NULL,
    UNIQUE (snapshot_id, canonical_path)
);
CREATE TABLE IF NOT EXISTS file_aliases (
    file_id INTEGER NOT NULL REFERENCES files(id),
    alias_path TEXT NOT NULL,
    UNIQUE (file_id, alias_path)
);
CREATE TABLE IF NOT EXISTS deps (
    id INTEGER PRIMARY KEY,
    snapshot_id INTEGER NOT NULL REFERENCES snapshots(id),
    from_file INTEGER NOT NULL REFERENCES files(id),
    needed_name TEXT NOT NULL,
    to_file INTEGER NULL REFERENCES files(id),
    origin TEXT NULL,
    UNIQUE (from_file, needed_name),
    CHECK ((to_file IS NULL) = (origin IS NULL))
);
CREATE INDEX IF NOT EXISTS deps_from_file ON deps(from_file);
CREATE INDEX IF NOT EXISTS deps_to_file ON deps(to_file);
CREATE INDEX IF NOT EXISTS files_snapshot_kind ON files(snapshot_id, kind);
CREATE TRIGGER IF NOT EXISTS deps_same_snapshot
BEFORE INSERT ON deps
FOR EACH ROW
WHEN (SELECT snapshot_id FROM files WHERE id = NEW.from_file) IS NOT NEW.snapshot_id
  OR (NEW.to_file IS NOT NULL AND (SELECT snapshot_id FROM files WHERE id = NEW.to_file) IS NOT NEW.snapshot_id)
BEGIN
    SELECT RAISE(ABORT, 'dependency crosses snapshots');
END;
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub id: i64,
    pub label: String,
    pub root_path: String,
    pub scanned_at: DateTime<Utc>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("snapshot label {0:?} already exists")]
    DuplicateLabel(String),
    #[error("unknown snapshot {0:?}")]
    UnknownLabel(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<rusqlite::Error> for StoreError {
    fn from(err: rusqlite::Error) -> Self {
        StoreError::StorageFailure(err.to_string())
    }
}

/// Points inside [`Store::save_snapshot_with`] where a hook runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveStage {
    SnapshotRow,
    Files,
    Aliases,
    Deps,
    BeforeCommit,
}

/// Metadata of a snapshot about to be written.
#[derive(Debug, Clone)]
pub struct SnapshotMeta {
    pub label: String,
    pub root_path: String,
    pub scanned_at: DateTime<Utc>,
    pub tool_version: String,
}

impl SnapshotMeta {
    pub fn new(label: impl Into<String>, root_path: impl Into<String>) -> Self {
        SnapshotMeta {
            label: label.into(),
            root_path: root_path.into(),
            scanned_at: Utc::now(),
            tool_version: TOOL_VERSION.to_owned(),
        }
    }
}

pub struct Store {
    conn: Connection,
    has_schema: bool,
}

impl Store {
    /// Opens or creates a database for writing.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        Self::init(conn)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn, has_schema: true })
    }

    /// Opens without write access. A missing file, or one without the
    /// schema, reads as a database with no snapshots.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(Store { conn: Connection::open_in_memory()?, has_schema: false });
        }
        // A crashed writer leaves a hot journal that only a writable handle
        // can roll back.
        let mut journal = path.as_os_str().to_owned();
        journal.push("-journal");
        if std::fs::metadata(&journal).is_ok_and(|m| m.len() > 0) {
            log::warn!("recovering interrupted write in {}", path.display());
            let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_WRITE)?;
            conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))?;
        }
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        let has_schema = conn
            .query_row("SELECT count(*) FROM sqlite_master WHERE type = 'table' AND name = 'snapshots'", [], |r| r.get::<_, i64>(0))?
            > 0;
        Ok(Store { conn, has_schema })
    }

    /// Writes a scan result as a new snapshot.
    pub fn save_scan(&mut self, result: &ScanResult, meta: &SnapshotMeta) -> Result<Snapshot, StoreError> {
        self.save_snapshot(&result.to_graph(), meta)
    }

    pub fn save_snapshot(&mut self, graph: &DependencyGraph, meta: &SnapshotMeta) -> Result<Snapshot, StoreError> {
        self.save_snapshot_with(graph, meta, |_| Ok(()))
    }

    /// Like [`Store::save_snapshot`], calling `hook` at each stage. An error
    /// from the hook rolls the whole snapshot back.
    pub fn save_snapshot_with(
        &mut self,
        graph: &DependencyGraph,
        meta: &SnapshotMeta,
        mut hook: impl FnMut(SaveStage) -> Result<(), String>,
    ) -> Result<Snapshot, StoreError> {
        let mut step = |stage| hook(stage).map_err(StoreError::StorageFailure);
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let scanned_at = meta.scanned_at.to_rfc3339_opts(SecondsFormat::Micros, true);
        let inserted = tx.execute(
            "INSERT INTO snapshots (label, root_path, scanned_at, tool_version) VALUES (?1, ?2, ?3, ?4)",
            params![meta.label, meta.root_path, scanned_at, meta.tool_version],
        );
        if let Err(err) = inserted {
            if err.sqlite_error_code() == Some(ErrorCode::ConstraintViolation) {
                return Err(StoreError::DuplicateLabel(meta.label.clone()));
            }
            return Err(err.into());
        }
        let snapshot_id = tx.last_insert_rowid();
        step(SaveStage::SnapshotRow)?;

        let mut file_ids = Vec::with_capacity(graph.len());
        {
            let mut insert = tx.prepare(
                "INSERT INTO files (snapshot_id, canonical_path, kind, soname, size_bytes) VALUES (?1, ?2, ?3, ?4, ?5)",
            )?;
            for n in graph.nodes() {
                insert.execute(params![snapshot_id, n.canonical_path, n.kind.as_str(), n.soname, n.size_bytes as i64])?;
                file_ids.push(tx.last_insert_rowid());
            }
        }
        step(SaveStage::Files)?;
        {
            let mut insert = tx.prepare("INSERT INTO file_aliases (file_id, alias_path) VALUES (?1, ?2)")?;
            for (n, &id) in graph.nodes().iter().zip(&file_ids) {
                for alias in &n.alias_paths {
                    insert.execute(params![id, alias])?;
                }
            }
        }
        step(SaveStage::Aliases)?;
        {
            let mut insert = tx.prepare(
                "INSERT INTO deps (snapshot_id, from_file, needed_name, to_file, origin) VALUES (?1, ?2, ?3, ?4, ?5)",
            )?;
            for e in graph.edges() {
                insert.execute(params![
                    snapshot_id,
                    file_ids[e.from.0],
                    e.needed_name,
                    e.to.map(|t| file_ids[t.0]),
                    e.origin.map(Origin::as_str),
                ])?;
            }
        }
        step(SaveStage::Deps)?;
        step(SaveStage::BeforeCommit)?;
        tx.commit()?;
        Ok(Snapshot {
            id: snapshot_id,
            label: meta.label.clone(),
            root_path: meta.root_path.clone(),
            scanned_at: parse_time(&scanned_at)?,
            tool_version: meta.tool_version.clone(),
        })
    }

    pub fn snapshot(&self, label: &str) -> Result<Snapshot, StoreError> {
        if !self.has_schema {
            return Err(StoreError::UnknownLabel(label.to_owned()));
        }
        let row = self
            .conn
            .query_row(
                "SELECT id, label, root_path, scanned_at, tool_version FROM snapshots WHERE label = ?1",
                [label],
                raw_snapshot,
            )
            .optional()?;
        row.ok_or_else(|| StoreError::UnknownLabel(label.to_owned()))?.into_snapshot()
    }

    /// Every snapshot in natural label order, then by scan time.
    pub fn list_snapshots(&self) -> Result<Vec<Snapshot>, StoreError> {
        if !self.has_schema {
            return Ok(Vec::new());
        }
        let mut stmt = self.conn.prepare("SELECT id, label, root_path, scanned_at, tool_version FROM snapshots")?;
        let mut out = stmt
            .query_map([], raw_snapshot)?
            .map(|r| r.map_err(StoreError::from).and_then(RawSnapshot::into_snapshot))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_by(|a, b| natural_cmp(&a.label, &b.label).then(a.scanned_at.cmp(&b.scanned_at)).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    pub fn load_graph(&self, label: &str) -> Result<DependencyGraph, StoreError> {
        let snapshot = self.snapshot(label)?;
        let mut stmt = self
            .conn
            .prepare("SELECT id, canonical_path, kind, soname, size_bytes FROM files WHERE snapshot_id = ?1 ORDER BY id")?;
        let mut index = HashMap::new();
        let mut nodes = Vec::new();
        let rows = stmt.query_map([snapshot.id], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, Option<String>>(3)?, r.get::<_, i64>(4)?))
        })?;
        for row in rows {
            let (id, path, kind, soname, size) = row?;
            let kind = FileKind::parse(&kind).ok_or_else(|| StoreError::StorageFailure(format!("bad kind {kind:?}")))?;
            index.insert(id, NodeId(nodes.len()));
            nodes.push(Node { canonical_path: path, alias_paths: Vec::new(), kind, soname, size_bytes: size as u64 });
        }

        let mut stmt = self.conn.prepare(
            "SELECT a.file_id, a.alias_path FROM file_aliases a JOIN files f ON f.id = a.file_id
             WHERE f.snapshot_id = ?1 ORDER BY a.rowid",
        )?;
        for row in stmt.query_map([snapshot.id], |r| Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?)))? {
            let (file, alias) = row?;
            nodes[index[&file].0].alias_paths.push(alias);
        }

        let mut stmt = self
            .conn
            .prepare("SELECT from_file, needed_name, to_file, origin FROM deps WHERE snapshot_id = ?1 ORDER BY id")?;
        let mut edges = Vec::new();
        let rows = stmt.query_map([snapshot.id], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, Option<i64>>(2)?, r.get::<_, Option<String>>(3)?))
        })?;
        let lookup = |id: i64| index.get(&id).copied().ok_or_else(|| StoreError::StorageFailure(format!("dangling file id {id}")));
        for row in rows {
            let (from, needed_name, to, origin) = row?;
            let origin = match origin {
                Some(code) => Some(Origin::parse(&code).ok_or_else(|| StoreError::StorageFailure(format!("bad origin {code:?}")))?),
                None => None,
            };
            edges.push(Edge { from: lookup(from)?, needed_name, to: to.map(lookup).transpose()?, origin });
        }
        DependencyGraph::new(nodes, edges).map_err(|e| StoreError::StorageFailure(e.to_string()))
    }

    #[cfg(test)]
    fn conn(&self) -> &Connection {
        &self.conn
    }
}

struct RawSnapshot {
    id: i64,
    label: String,
    root_path: String,
    scanned_at: String,
    tool_version: String,
}

impl RawSnapshot {
    fn into_snapshot(self) -> Result<Snapshot, StoreError> {
        Ok(Snapshot {
            id: self.id,
            label: self.label,
            root_path: self.root_path,
            scanned_at: parse_time(&self.scanned_at)?,
            tool_version: self.tool_version,
        })
    }
}

fn raw_snapshot(r: &rusqlite::Row<'_>) -> rusqlite::Result<RawSnapshot> {
    Ok(RawSnapshot { id: r.get(0)?, label: r.get(1)?, root_path: r.get(2)?, scanned_at: r.get(3)?, tool_version: r.get(4)? })
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::StorageFailure(format!("bad timestamp {s:?}: {e}")))
}

#[derive(Debug, PartialEq, Eq)]
enum Chunk<'a> {
    Number(&'a str),
    Text(&'a str),
}

fn chunks(s: &str) -> Vec<Chunk<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = s.as_bytes();
    while start < bytes.len() {
        let digit = bytes[start].is_ascii_digit();
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() == digit {
            end += 1;
        }
        let part = &s[start..end];
        out.push(if digit { Chunk::Number(part) } else { Chunk::Text(part) });
        start = end;
    }
    out
}

fn cmp_number(a: &str, b: &str) -> Ordering {
    let ta = a.trim_start_matches('0');
    let tb = b.trim_start_matches('0');
    ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| a.len().cmp(&b.len()))
}

/// Version-aware label order: digit runs compare numerically, labels that
/// start with a digit sort before the rest.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (ca, cb) = (chunks(a), chunks(b));
    let numeric = |c: &[Chunk<'_>]| matches!(c.first(), Some(Chunk::Number(_)));
    numeric(&cb).cmp(&numeric(&ca)).then_with(|| {
        for (x, y) in ca.iter().zip(&cb) {
            let ord = match (x, y) {
                (Chunk::Number(x), Chunk::Number(y)) => cmp_number(x, y),
                (Chunk::Text(x), Chunk::Text(y)) => x.cmp(y),
                (Chunk::Number(_), Chunk::Text(_)) => Ordering::Less,
                (Chunk::Text(_), Chunk::Number(_)) => Ordering::Greater,
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        ca.len().cmp(&cb.len())
    })
}
