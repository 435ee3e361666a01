//! Dynamic-loader search emulation confined to a sysroot.
//!
//! Every path handled here is an absolute path *inside* the sysroot
//! (`/usr/lib/libc.so.6`), never a host path. Host paths are only formed at
//! the filesystem boundary in `canon`.
//!
//! Search order for a needed name without a '/':
//!
//! | step | directories                                   | origin       | used when             |
//! |------|-----------------------------------------------|--------------|-----------------------|
//! | 1    | `DT_RPATH` elements, `$ORIGIN` substituted    | `rpath`      | no `DT_RUNPATH`       |
//! | 2    | `env_library_path`                            | `env_path`   | always                |
//! | 3    | `DT_RUNPATH` elements, `$ORIGIN` substituted  | `runpath`    | always                |
//! | 4    | ld.so.conf directories, includes expanded     | `ldso_conf`  | always                |
//! | 5    | `default_dirs`, then multiarch directories    | `default_dir`| always                |
//!
//! A name containing '/' is opened as a path (relative to the dependent's
//! directory when not absolute) with origin `direct`, and never searched.
//! The first directory holding a regular file of that name wins; symlinks
//! are followed inside the sysroot, absolute targets re-rooted, and a
//! directory whose probe hits a symlink loop is skipped.

mod canon;
mod ldso;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::elf::ElfSummary;

pub use canon::{canonicalize_in_sysroot, SymlinkLoop, MAX_SYMLINK_HOPS};
pub use ldso::{parse_ldso_conf, LdsoConfError};

pub const DEFAULT_DIRS: [&str; 4] = ["/lib", "/usr/lib", "/lib64", "/usr/lib64"];
pub const DEFAULT_LDSO_CONF: &str = "/etc/ld.so.conf";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("sysroot {0} is not a readable directory")]
    SysrootUnreadable(PathBuf),
}

/// Where the loader looks, and in what order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub sysroot: PathBuf,
    /// Models `LD_LIBRARY_PATH`.
    pub env_library_path: Vec<String>,
    pub default_dirs: Vec<String>,
    pub ldso_conf_path: String,
    /// Append `/lib/<triplet>` style directories found under `/lib` and
    /// `/usr/lib` after `default_dirs`.
    pub discover_multiarch: bool,
}

impl SearchConfig {
    pub fn new(sysroot: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let sysroot = sysroot.as_ref();
        let abs = std::fs::canonicalize(sysroot).map_err(|_| ConfigError::SysrootUnreadable(sysroot.to_owned()))?;
        if !abs.is_dir() || std::fs::read_dir(&abs).is_err() {
            return Err(ConfigError::SysrootUnreadable(sysroot.to_owned()));
        }
        Ok(SearchConfig {
            sysroot: abs,
            env_library_path: Vec::new(),
            default_dirs: DEFAULT_DIRS.iter().map(|d| d.to_string()).collect(),
            ldso_conf_path: DEFAULT_LDSO_CONF.to_owned(),
            discover_multiarch: true,
        })
    }

    pub fn with_env_library_path(mut self, dirs: Vec<String>) -> Self {
        self.env_library_path = dirs;
        self
    }

    pub fn with_default_dirs(mut self, dirs: Vec<String>) -> Self {
        self.default_dirs = dirs;
        self
    }

    pub fn with_multiarch(mut self, on: bool) -> Self {
        self.discover_multiarch = on;
        self
    }

    /// Host path for a sysroot-internal absolute path.
    pub fn host_path(&self, inner: &str) -> PathBuf {
        self.sysroot.join(inner.trim_start_matches('/'))
    }
}

/// The search stage that produced a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Rpath,
    EnvPath,
    Runpath,
    LdsoConf,
    DefaultDir,
    /// The needed name contained a '/' and was opened as a path.
    Direct,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Rpath => "rpath",
            Origin::EnvPath => "env_path",
            Origin::Runpath => "runpath",
            Origin::LdsoConf => "ldso_conf",
            Origin::DefaultDir => "default_dir",
            Origin::Direct => "direct",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        Some(match code {
            "rpath" => Origin::Rpath,
            "env_path" => Origin::EnvPath,
            "runpath" => Origin::Runpath,
            "ldso_conf" => Origin::LdsoConf,
            "default_dir" => Origin::DefaultDir,
            "direct" => Origin::Direct,
            _ => return None,
        })
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Resolved { path: String, origin: Origin },
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub needed_name: String,
    #[serde(flatten)]
    pub status: Status,
}

impl Resolution {
    pub fn path(&self) -> Option<&str> {
        match &self.status {
            Status::Resolved { path, .. } => Some(path),
            Status::Missing => None,
        }
    }

    pub fn origin(&self) -> Option<Origin> {
        match self.status {
            Status::Resolved { origin, .. } => Some(origin),
            Status::Missing => None,
        }
    }
}

/// One directory in the search order, tagged with its stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchDir {
    pub dir: String,
    pub origin: Origin,
}

/// Replaces `$ORIGIN` and `${ORIGIN}` with the dependent's directory.
pub fn substitute_origin(raw_path_element: &str, dependent_file_dir: &str) -> String {
    raw_path_element
        .replace("${ORIGIN}", dependent_file_dir)
        .replace("$ORIGIN", dependent_file_dir)
}

fn split_search_path(raw: &str, dependent_dir: &str, origin: Origin, out: &mut Vec<SearchDir>) {
    for element in raw.split(':').filter(|e| !e.is_empty()) {
        let dir = substitute_origin(element, dependent_dir);
        // Relative elements are taken relative to the loader's working
        // directory, assumed to be "/".
        let dir = if dir.starts_with('/') { dir } else { format!("/{dir}") };
        out.push(SearchDir { dir, origin });
    }
}

/// Directories from ld.so.conf followed by the default and multiarch
/// directories. Independent of the file being resolved, so it is computed
/// once per scan.
#[derive(Debug, Clone)]
struct SystemDirs {
    ldso: Vec<String>,
    defaults: Vec<String>,
}

impl SystemDirs {
    fn load(config: &SearchConfig) -> Self {
        let ldso = match parse_ldso_conf(config) {
            Ok(dirs) => dirs,
            Err(err) => {
                log::warn!("{err}");
                err.into_dirs()
            }
        };
        let mut defaults = config.default_dirs.clone();
        if config.discover_multiarch {
            for dir in ldso::discover_multiarch(config) {
                if !defaults.contains(&dir) {
                    defaults.push(dir);
                }
            }
        }
        SystemDirs { ldso, defaults }
    }
}

fn search_order_with(summary: &ElfSummary, dependent_dir: &str, config: &SearchConfig, system: &SystemDirs) -> Vec<SearchDir> {
    let mut order = Vec::new();
    if summary.runpath.is_none() {
        if let Some(rpath) = &summary.rpath {
            split_search_path(rpath, dependent_dir, Origin::Rpath, &mut order);
        }
    }
    order.extend(config.env_library_path.iter().map(|d| SearchDir { dir: d.clone(), origin: Origin::EnvPath }));
    if let Some(runpath) = &summary.runpath {
        split_search_path(runpath, dependent_dir, Origin::Runpath, &mut order);
    }
    order.extend(system.ldso.iter().map(|d| SearchDir { dir: d.clone(), origin: Origin::LdsoConf }));
    order.extend(system.defaults.iter().map(|d| SearchDir { dir: d.clone(), origin: Origin::DefaultDir }));
    order
}

/// Full search order for one dependent file: RPATH (only without RUNPATH),
/// environment path, RUNPATH, ld.so.conf, default directories.
pub fn build_search_order(summary: &ElfSummary, dependent_dir: &str, config: &SearchConfig) -> Vec<SearchDir> {
    search_order_with(summary, dependent_dir, config, &SystemDirs::load(config))
}

/// Resolves one needed name without a cached [`Resolver`].
pub fn resolve_needed(needed_name: &str, summary: &ElfSummary, dependent_path: &str, config: &SearchConfig) -> Resolution {
    Resolver::new(config.clone()).resolve(needed_name, summary, dependent_path)
}

pub(crate) fn parent_dir(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &path[..i],
    }
}

/// A [`SearchConfig`] with the per-scan state precomputed: ld.so.conf
/// directories, multiarch discovery, and canonical forms of search
/// directories. Safe to share between extraction workers.
#[derive(Debug)]
pub struct Resolver {
    config: SearchConfig,
    system: SystemDirs,
    dir_cache: RwLock<HashMap<String, Option<String>>>,
}

impl Resolver {
    pub fn new(config: SearchConfig) -> Self {
        let system = SystemDirs::load(&config);
        Resolver { config, system, dir_cache: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn ldso_dirs(&self) -> &[String] {
        &self.system.ldso
    }

    pub fn default_dirs(&self) -> &[String] {
        &self.system.defaults
    }

    pub fn search_order(&self, summary: &ElfSummary, dependent_dir: &str) -> Vec<SearchDir> {
        search_order_with(summary, dependent_dir, &self.config, &self.system)
    }

    pub fn canonicalize(&self, path: &str) -> Result<String, SymlinkLoop> {
        canonicalize_in_sysroot(path, &self.config)
    }

    /// Canonical directory, or `None` if it does not exist as a directory.
    fn canonical_dir(&self, dir: &str) -> Option<String> {
        if let Some(hit) = self.dir_cache.read().unwrap().get(dir) {
            return hit.clone();
        }
        let canonical = self
            .canonicalize(dir)
            .ok()
            .filter(|c| std::fs::symlink_metadata(self.config.host_path(c)).map(|m| m.is_dir()).unwrap_or(false));
        self.dir_cache.write().unwrap().insert(dir.to_owned(), canonical.clone());
        canonical
    }

    /// Canonical path of a regular file, or `None`.
    fn regular_file(&self, path: &str) -> Option<String> {
        let canonical = self.canonicalize(path).ok()?;
        let meta = std::fs::symlink_metadata(self.config.host_path(&canonical)).ok()?;
        meta.is_file().then_some(canonical)
    }

    fn probe(&self, dir: &str, name: &str) -> Option<String> {
        let dir = self.canonical_dir(dir)?;
        let candidate = if dir == "/" { format!("/{name}") } else { format!("{dir}/{name}") };
        let meta = std::fs::symlink_metadata(self.config.host_path(&candidate)).ok()?;
        if meta.is_file() {
            Some(candidate)
        } else if meta.file_type().is_symlink() {
            self.regular_file(&candidate)
        } else {
            None
        }
    }

    /// Resolves `needed_name` for the file at canonical path `dependent_path`.
    /// The first directory in the search order holding a regular file of that
    /// exact name wins.
    pub fn resolve(&self, needed_name: &str, summary: &ElfSummary, dependent_path: &str) -> Resolution {
        let dependent_dir = parent_dir(dependent_path);
        let status = if needed_name.contains('/') {
            let path = if needed_name.starts_with('/') {
                needed_name.to_owned()
            } else {
                format!("{}/{needed_name}", dependent_dir.trim_end_matches('/'))
            };
            match self.regular_file(&path) {
                Some(path) => Status::Resolved { path, origin: Origin::Direct },
                None => Status::Missing,
            }
        } else {
            self.search_order(summary, dependent_dir)
                .into_iter()
                .find_map(|sd| self.probe(&sd.dir, needed_name).map(|path| Status::Resolved { path, origin: sd.origin }))
                .unwrap_or(Status::Missing)
        };
        Resolution { needed_name: needed_name.to_owned(), status }
    }
}
