use std::path::Path;

use depex_core::evolution::{trend_report, TREND_COLUMNS};
use depex_core::graph::{DependencyGraph, GraphError, NodeId};
use depex_core::metrics::stats_summary;
use depex_core::query::{emit_dot, get_all_deps, get_deps, lookup, update_impact, who_uses, DotOptions, LookupError};
use depex_core::resolve::{ConfigError, SearchConfig};
use depex_core::scan::{scan_tree, PluginRegistry, ScanError, ScanOptions};
use depex_core::store::{SaveStage, SnapshotMeta, Store, StoreError};

use crate::render;
use crate::{Cli, Command, Failure, Format, ReadOpts};

/// Aborts the process at the named save stage; used by crash tests.
const ABORT_AT_ENV: &str = "DEPEX_TEST_ABORT_AT";

impl From<StoreError> for Failure {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::StorageFailure(_) => Failure::Internal(err.to_string()),
            _ => Failure::User(err.to_string()),
        }
    }
}

impl From<LookupError> for Failure {
    fn from(err: LookupError) -> Self {
        Failure::User(err.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(err: GraphError) -> Self {
        Failure::Internal(err.to_string())
    }
}

fn db_path(cli_db: Option<&Path>) -> Result<&Path, Failure> {
    cli_db.ok_or_else(|| Failure::User("no database given; pass --db or set DEPEX_DB".into()))
}

/// Loads the requested snapshot, or the last one in version order.
fn load(db: &Path, read: &ReadOpts) -> Result<(String, DependencyGraph), Failure> {
    let store = Store::open_read_only(db)?;
    let label = match &read.snapshot {
        Some(label) => label.clone(),
        None => match store.list_snapshots()?.pop() {
            Some(s) => s.label,
            None => return Err(Failure::User("unknown snapshot: the database holds no snapshots".into())),
        },
    };
    let graph = store.load_graph(&label)?;
    Ok((label, graph))
}

fn out(text: String) {
    print!("{text}");
}

fn stage_name(stage: SaveStage) -> &'static str {
    match stage {
        SaveStage::SnapshotRow => "snapshot",
        SaveStage::Files => "files",
        SaveStage::Aliases => "aliases",
        SaveStage::Deps => "deps",
        SaveStage::BeforeCommit => "commit",
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let db = cli.db.as_deref();
    match cli.command {
        Command::Scan { sysroot, label, excludes, workers, library_path, json } => {
            let db = db_path(db)?;
            if let Some(bad) = excludes.iter().find(|e| !e.starts_with('/')) {
                return Err(Failure::User(format!("excluded prefix {bad:?} is not absolute")));
            }
            let config = SearchConfig::new(&sysroot).map_err(|ConfigError::SysrootUnreadable(p)| {
                Failure::User(format!("sysroot {} is not a readable directory", p.display()))
            })?;
            let env_dirs = library_path.map(|p| p.split(':').map(str::to_owned).collect()).unwrap_or_default();
            let mut options = ScanOptions::new(config.with_env_library_path(env_dirs)).with_workers(workers);
            options.excluded_prefixes.extend(excludes);
            let result = scan_tree(&options, &PluginRegistry::with_elf()).map_err(|e| match e {
                ScanError::SysrootUnreadable(_) => Failure::User(e.to_string()),
            })?;
            for err in &result.errors {
                log::warn!("{}: {}", err.path, err.message);
            }
            let mut store = Store::open(db)?;
            let meta = SnapshotMeta::new(label, options.config.sysroot.to_string_lossy());
            let abort_at = std::env::var(ABORT_AT_ENV).ok();
            let snapshot = store.save_snapshot_with(&result.to_graph(), &meta, |stage| {
                if abort_at.as_deref() == Some(stage_name(stage)) {
                    std::process::abort();
                }
                Ok(())
            })?;
            out(if json { render::scan_json(&snapshot, &result) } else { render::scan_text(&snapshot, &result) });
        }
        Command::Stats(read) => {
            let (label, graph) = load(db_path(db)?, &read)?;
            let stats = stats_summary(&graph);
            out(if read.json { render::json(&stats) } else { render::stats_text(&label, &stats) });
        }
        Command::Snapshots { json } => {
            let list = Store::open_read_only(db_path(db)?)?.list_snapshots()?;
            out(if json { render::json(&list) } else { render::snapshots_text(&list) });
        }
        Command::WhoUses { name, transitive, read } => {
            let (_, graph) = load(db_path(db)?, &read)?;
            let target = lookup(&graph, &name)?;
            let users = who_uses(&graph, target, transitive)?;
            out(render::who_uses(&graph, target, transitive, &users, read.json));
        }
        Command::GetDeps { path, read } => {
            let (_, graph) = load(db_path(db)?, &read)?;
            let node = lookup(&graph, &path)?;
            out(render::get_deps(&graph, node, &get_deps(&graph, node)?, read.json));
        }
        Command::GetAllDeps { path, read } => {
            let (_, graph) = load(db_path(db)?, &read)?;
            let node = lookup(&graph, &path)?;
            out(render::get_all_deps(&graph, node, &get_all_deps(&graph, node)?, read.json));
        }
        Command::Impact { name, read } => {
            let (_, graph) = load(db_path(db)?, &read)?;
            let node = lookup(&graph, &name)?;
            out(render::impact(&graph, node, &update_impact(&graph, node)?, read.json));
        }
        Command::Dot { hide_top, hide_names, roots, read } => {
            let (_, graph) = load(db_path(db)?, &read)?;
            let roots = roots.iter().map(|r| lookup(&graph, r)).collect::<Result<Vec<NodeId>, _>>()?;
            let dot = emit_dot(&graph, &DotOptions { hide_top_k: hide_top, hide_names, roots })?;
            out(if read.json { render::json(&serde_json::json!({ "dot": dot })) } else { dot });
        }
        Command::Evolve { snapshots, format, json } => {
            let store = Store::open_read_only(db_path(db)?)?;
            let labels = if snapshots.is_empty() {
                store.list_snapshots()?.into_iter().map(|s| s.label).collect()
            } else {
                snapshots
            };
            let rows = trend_report(&store, &labels)?;
            if json || format == Format::Json {
                out(render::json(&rows));
            } else {
                let mut text = TREND_COLUMNS.join(",");
                text.push('\n');
                for row in &rows {
                    text.push_str(&row.csv_fields().map(|f| render::csv_field(&f)).join(","));
                    text.push('\n');
                }
                out(text);
            }
        }
    }
    Ok(())
}
