//! Sysroot walker and plugin dispatch.
//!
//! The walk itself never follows symlinks, so every regular file is met once
//! under its physical path, which is already canonical. Symlinks are
//! canonicalized afterwards and recorded as alias paths of the nodes they
//! reach. Extraction runs per distinct inode on the configured worker count;
//! assembly of nodes and edges is sequential and sorted.

mod plugin;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::Read;
use std::os::unix::fs::MetadataExt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::Serialize;

use crate::elf::{ElfSummary, FileKind};
use crate::graph::{DependencyGraph, Edge, Node, NodeId};
use crate::par::{self, Parallelism};
use crate::resolve::{Origin, Resolver, SearchConfig, Status};

pub use plugin::{ElfPlugin, Extraction, NodeFacts, Plugin, PluginError, PluginHandle, PluginRegistry, RegistryError};

pub const HEADER_LEN: usize = 64;
pub const DEFAULT_EXCLUDES: [&str; 4] = ["/proc", "/sys", "/dev", "/run"];
const MAX_ALIASES: usize = 256;
const ALIAS_ROUNDS: usize = 8;

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub config: SearchConfig,
    /// Record symlinked paths as aliases of the files they reach.
    pub follow_symlinks: bool,
    pub excluded_prefixes: Vec<String>,
    /// Extraction workers; 0 picks the machine's parallelism.
    pub parallelism_hint: usize,
}

impl ScanOptions {
    pub fn new(config: SearchConfig) -> Self {
        ScanOptions {
            config,
            follow_symlinks: true,
            excluded_prefixes: DEFAULT_EXCLUDES.iter().map(|s| s.to_string()).collect(),
            parallelism_hint: 0,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.parallelism_hint = workers;
        self
    }

    fn is_excluded(&self, path: &str) -> bool {
        self.excluded_prefixes.iter().any(|p| {
            let p = p.trim_end_matches('/');
            !p.is_empty() && (path == p || path.strip_prefix(p).is_some_and(|rest| rest.starts_with('/')))
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("sysroot {0} is not a readable directory")]
    SysrootUnreadable(PathBuf),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanCounts {
    /// Regular files visited, hard links counted per path.
    pub files_seen: usize,
    /// Files a plugin extracted successfully.
    pub elf_parsed: usize,
    pub executables: usize,
    pub libraries: usize,
    /// Relocatable and other ELF objects, outside the binary/library counts.
    pub elf_other: usize,
    pub errors: usize,
}

/// Instrumentation of file reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IoCounters {
    pub header_reads: usize,
    pub full_reads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedNode {
    pub canonical_path: String,
    pub alias_paths: Vec<String>,
    pub kind: FileKind,
    pub soname: Option<String>,
    pub size_bytes: u64,
    pub plugin: String,
    pub summary: Option<ElfSummary>,
}

/// `from`/`to` index into [`ScanResult::nodes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedEdge {
    pub from: usize,
    pub needed_name: String,
    pub to: Option<usize>,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanWarning {
    PluginOverlap { path: String, chosen: String, also: Vec<String> },
    SymlinkLoop { path: String },
    /// A needed name resolved to a file no plugin turned into a node.
    TargetNotANode { from: String, needed_name: String, target: String },
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub counts: ScanCounts,
    pub duration_secs: f64,
    /// Sorted by canonical path.
    pub nodes: Vec<ScannedNode>,
    /// Sorted by dependent, then declaration order.
    pub edges: Vec<ScannedEdge>,
    pub errors: Vec<FileError>,
    pub warnings: Vec<ScanWarning>,
    pub io: IoCounters,
}

impl ScanResult {
    pub fn to_graph(&self) -> DependencyGraph {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                canonical_path: n.canonical_path.clone(),
                alias_paths: n.alias_paths.clone(),
                kind: n.kind,
                soname: n.soname.clone(),
                size_bytes: n.size_bytes,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { from: NodeId(e.from), needed_name: e.needed_name.clone(), to: e.to.map(NodeId), origin: e.origin })
            .collect();
        DependencyGraph::new(nodes, edges).expect("scanner output is consistent")
    }

    /// ELF summaries keyed by the node ids of [`ScanResult::to_graph`].
    pub fn summaries(&self) -> BTreeMap<NodeId, ElfSummary> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.summary.clone().map(|s| (NodeId(i), s)))
            .collect()
    }
}

struct WalkedFile {
    path: String,
    inode: (u64, u64),
    size: u64,
}

#[derive(Default)]
struct Walk {
    files: Vec<WalkedFile>,
    symlinks: Vec<String>,
    errors: Vec<FileError>,
}

fn join(dir: &str, name: &str) -> String {
    if dir == "/" {
        format!("/{name}")
    } else {
        format!("{dir}/{name}")
    }
}

fn walk(options: &ScanOptions) -> Walk {
    let config = &options.config;
    let mut out = Walk::default();
    let mut stack = vec![String::from("/")];
    while let Some(dir) = stack.pop() {
        let entries = match fs::read_dir(config.host_path(&dir)) {
            Ok(entries) => entries,
            Err(err) => {
                out.errors.push(FileError { path: dir, message: err.to_string() });
                continue;
            }
        };
        let mut names = Vec::new();
        for entry in entries {
            let entry = match entry {
                Ok(entry) => entry,
                Err(err) => {
                    out.errors.push(FileError { path: dir.clone(), message: err.to_string() });
                    continue;
                }
            };
            match entry.file_name().into_string() {
                Ok(name) => names.push(name),
                Err(raw) => out.errors.push(FileError {
                    path: join(&dir, &raw.to_string_lossy()),
                    message: "file name is not valid UTF-8".into(),
                }),
            }
        }
        names.sort();
        let mut subdirs = Vec::new();
        for name in names {
            let path = join(&dir, &name);
            if options.is_excluded(&path) {
                continue;
            }
            let meta = match fs::symlink_metadata(config.host_path(&path)) {
                Ok(meta) => meta,
                Err(err) => {
                    out.errors.push(FileError { path, message: err.to_string() });
                    continue;
                }
            };
            let ft = meta.file_type();
            if ft.is_dir() {
                subdirs.push(path);
            } else if ft.is_symlink() {
                out.symlinks.push(path);
            } else if ft.is_file() {
                out.files.push(WalkedFile { path, inode: (meta.dev(), meta.ino()), size: meta.len() });
            }
        }
        // Reverse so the stack pops in sorted order.
        stack.extend(subdirs.into_iter().rev());
    }
    out
}

enum Outcome {
    Unmatched,
    Declined,
    Extracted { plugin: usize, extraction: Box<Extraction>, overlap: Vec<usize> },
    Failed(FileError),
}

fn read_header(file: &mut File) -> std::io::Result<Vec<u8>> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    file.by_ref().take(HEADER_LEN as u64).read_to_end(&mut header)?;
    Ok(header)
}

struct Extractor<'a> {
    registry: &'a PluginRegistry,
    resolver: &'a Resolver,
    header_reads: AtomicUsize,
    full_reads: AtomicUsize,
}

impl Extractor<'_> {
    fn run(&self, path: &str) -> Outcome {
        let fail = |err: std::io::Error| Outcome::Failed(FileError { path: path.to_owned(), message: err.to_string() });
        let mut file = match File::open(self.resolver.config().host_path(path)) {
            Ok(file) => file,
            Err(err) => return fail(err),
        };
        let mut bytes = match read_header(&mut file) {
            Ok(header) => header,
            Err(err) => return fail(err),
        };
        self.header_reads.fetch_add(1, Ordering::Relaxed);
        let matching = self.registry.matching(path, &bytes);
        let Some((&first, rest)) = matching.split_first() else {
            return Outcome::Unmatched;
        };
        // Continue on the same handle so the header is not read twice.
        if let Err(err) = file.read_to_end(&mut bytes) {
            return fail(err);
        }
        self.full_reads.fetch_add(1, Ordering::Relaxed);
        let plugin = self.registry.get(first).expect("matched index");
        match plugin.extract(path, &bytes, self.resolver) {
            Ok(Some(extraction)) => Outcome::Extracted { plugin: first, extraction: Box::new(extraction), overlap: rest.to_vec() },
            Ok(None) => Outcome::Declined,
            Err(err) => Outcome::Failed(FileError { path: path.to_owned(), message: err.to_string() }),
        }
    }
}

/// Walks the sysroot and extracts every file a registered plugin claims.
pub fn scan_tree(options: &ScanOptions, registry: &PluginRegistry) -> Result<ScanResult, ScanError> {
    let started = Instant::now();
    let sysroot = &options.config.sysroot;
    if !sysroot.is_dir() || fs::read_dir(sysroot).is_err() {
        return Err(ScanError::SysrootUnreadable(sysroot.clone()));
    }
    let resolver = Resolver::new(options.config.clone());
    let walked = walk(options);

    // One extraction per inode; the lexically first path is canonical.
    let mut by_inode: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, f) in walked.files.iter().enumerate() {
        by_inode.entry(f.inode).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_inode.into_values().collect();
    for g in &mut groups {
        g.sort_by(|&a, &b| walked.files[a].path.cmp(&walked.files[b].path));
    }
    groups.sort_by(|a, b| walked.files[a[0]].path.cmp(&walked.files[b[0]].path));

    let extractor = Extractor {
        registry,
        resolver: &resolver,
        header_reads: AtomicUsize::new(0),
        full_reads: AtomicUsize::new(0),
    };
    let parallelism = Parallelism::from_hint(options.parallelism_hint);
    let outcomes = par::map(parallelism, &groups, |g| extractor.run(&walked.files[g[0]].path));

    let mut errors = walked.errors;
    let mut warnings = Vec::new();
    let mut nodes = Vec::new();
    let mut claims = Vec::new();
    for (group, outcome) in groups.iter().zip(outcomes) {
        match outcome {
            Outcome::Unmatched | Outcome::Declined => {}
            Outcome::Failed(err) => errors.push(err),
            Outcome::Extracted { plugin, extraction, overlap } => {
                let file = &walked.files[group[0]];
                let chosen = registry.get(plugin).unwrap().name().to_owned();
                if !overlap.is_empty() {
                    let also: Vec<String> = overlap.iter().map(|&i| registry.get(i).unwrap().name().to_owned()).collect();
                    log::warn!("{}: claimed by {chosen} and also by {}", file.path, also.join(", "));
                    warnings.push(ScanWarning::PluginOverlap { path: file.path.clone(), chosen: chosen.clone(), also });
                }
                nodes.push(ScannedNode {
                    canonical_path: file.path.clone(),
                    alias_paths: group[1..].iter().map(|&i| walked.files[i].path.clone()).collect(),
                    kind: extraction.facts.kind,
                    soname: extraction.facts.soname,
                    size_bytes: file.size,
                    plugin: chosen,
                    summary: extraction.facts.summary,
                });
                claims.push(extraction.claims);
            }
        }
    }

    if options.follow_symlinks {
        add_symlink_aliases(&resolver, &walked.symlinks, &mut nodes, &mut warnings);
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        index.insert(n.canonical_path.clone(), i);
    }
    // Hard-link paths are physical too, so resolutions can land on them.
    for (i, n) in nodes.iter().enumerate() {
        for a in &n.alias_paths {
            index.entry(a.clone()).or_insert(i);
        }
    }

    let mut edges = Vec::new();
    for (from, node_claims) in claims.into_iter().enumerate() {
        let mut seen = BTreeSet::new();
        for claim in node_claims {
            if !seen.insert(claim.needed_name.clone()) {
                continue;
            }
            let (to, origin) = match &claim.status {
                Status::Resolved { path, origin } => match index.get(path) {
                    Some(&to) => (Some(to), Some(*origin)),
                    None => {
                        warnings.push(ScanWarning::TargetNotANode {
                            from: nodes[from].canonical_path.clone(),
                            needed_name: claim.needed_name.clone(),
                            target: path.clone(),
                        });
                        (None, None)
                    }
                },
                Status::Missing => (None, None),
            };
            edges.push(ScannedEdge { from, needed_name: claim.needed_name, to, origin });
        }
    }

    let counts = ScanCounts {
        files_seen: walked.files.len(),
        elf_parsed: nodes.len(),
        executables: nodes.iter().filter(|n| n.kind == FileKind::ExecutableBinary).count(),
        libraries: nodes.iter().filter(|n| n.kind == FileKind::SharedLibrary).count(),
        elf_other: nodes.iter().filter(|n| n.kind == FileKind::ElfOther).count(),
        errors: errors.len(),
    };
    Ok(ScanResult {
        counts,
        duration_secs: started.elapsed().as_secs_f64(),
        nodes,
        edges,
        errors,
        warnings,
        io: IoCounters {
            header_reads: extractor.header_reads.into_inner(),
            full_reads: extractor.full_reads.into_inner(),
        },
    })
}

/// Records every symlinked path that reaches a node as one of its aliases,
/// including paths through symlinked directories.
fn add_symlink_aliases(resolver: &Resolver, symlinks: &[String], nodes: &mut [ScannedNode], warnings: &mut Vec<ScanWarning>) {
    let config = resolver.config();
    let mut physical: HashMap<String, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        physical.insert(n.canonical_path.clone(), i);
        for a in &n.alias_paths {
            physical.insert(a.clone(), i);
        }
    }
    let mut aliases: Vec<BTreeSet<String>> = nodes.iter().map(|n| n.alias_paths.iter().cloned().collect()).collect();
    // Directory links keyed by their canonical target.
    let mut dir_links: HashMap<String, Vec<String>> = HashMap::new();
    for link in symlinks {
        let target = match resolver.canonicalize(link) {
            Ok(target) => target,
            Err(_) => {
                warnings.push(ScanWarning::SymlinkLoop { path: link.clone() });
                continue;
            }
        };
        let Ok(meta) = fs::symlink_metadata(config.host_path(&target)) else { continue };
        if meta.is_file() {
            if let Some(&i) = physical.get(&target) {
                aliases[i].insert(link.clone());
            }
        } else if meta.is_dir() && target != "/" && !link.starts_with(&format!("{target}/")) {
            dir_links.entry(target).or_default().push(link.clone());
        }
    }
    if !dir_links.is_empty() {
        for (i, node) in nodes.iter().enumerate() {
            let mut frontier: Vec<String> = std::iter::once(node.canonical_path.clone()).chain(aliases[i].iter().cloned()).collect();
            for _ in 0..ALIAS_ROUNDS {
                let mut next = Vec::new();
                for path in &frontier {
                    for (cut, _) in path.match_indices('/').skip(1) {
                        let Some(links) = dir_links.get(&path[..cut]) else { continue };
                        for link in links {
                            let alias = format!("{link}{}", &path[cut..]);
                            if alias != node.canonical_path && aliases[i].len() < MAX_ALIASES && aliases[i].insert(alias.clone()) {
                                next.push(alias);
                            }
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
        }
    }
    for (node, set) in nodes.iter_mut().zip(aliases) {
        node.alias_paths = set.into_iter().collect();
    }
}
