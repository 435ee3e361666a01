use std::fs;

use glob::{MatchOptions, Pattern};

use super::{canonicalize_in_sysroot, parent_dir, SearchConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LdsoConfError {
    /// An include chain came back to a file already being read. The
    /// directories gathered from the rest of the configuration are kept.
    #[error("cyclic include of {file} in ld.so.conf")]
    CyclicInclude { file: String, dirs: Vec<String> },
}

impl LdsoConfError {
    pub fn into_dirs(self) -> Vec<String> {
        match self {
            LdsoConfError::CyclicInclude { dirs, .. } => dirs,
        }
    }
}

#[derive(Default)]
struct ConfWalk {
    stack: Vec<String>,
    dirs: Vec<String>,
    cycle: Option<String>,
}

/// Directories named by ld.so.conf inside the sysroot, in file order, with
/// `include` globs expanded recursively. An absent file yields no directories.
pub fn parse_ldso_conf(config: &SearchConfig) -> Result<Vec<String>, LdsoConfError> {
    let mut walk = ConfWalk::default();
    read_conf(config, &config.ldso_conf_path, &mut walk);
    match walk.cycle {
        Some(file) => Err(LdsoConfError::CyclicInclude { file, dirs: walk.dirs }),
        None => Ok(walk.dirs),
    }
}

fn read_conf(config: &SearchConfig, path: &str, walk: &mut ConfWalk) {
    let Ok(canonical) = canonicalize_in_sysroot(path, config) else {
        return;
    };
    if walk.stack.contains(&canonical) {
        walk.cycle.get_or_insert(canonical);
        return;
    }
    let Ok(text) = fs::read_to_string(config.host_path(&canonical)) else {
        return;
    };
    walk.stack.push(canonical.clone());
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = strip_keyword(line, "include") {
            for pattern in rest.split_whitespace() {
                let pattern = if pattern.starts_with('/') {
                    pattern.to_owned()
                } else {
                    format!("{}/{pattern}", parent_dir(&canonical))
                };
                for file in glob_in_sysroot(config, &pattern) {
                    read_conf(config, &file, walk);
                }
            }
        } else if strip_keyword(line, "hwcap").is_some() {
            continue;
        } else {
            // Old-style lines may hold several directories and "=TYPE" suffixes.
            for dir in line.split(|c: char| c.is_whitespace() || c == ':' || c == ',') {
                let dir = dir.split('=').next().unwrap_or("");
                if dir.starts_with('/') {
                    let trimmed = dir.trim_end_matches('/');
                    walk.dirs.push(if trimmed.is_empty() { "/".to_owned() } else { trimmed.to_owned() });
                }
            }
        }
    }
    walk.stack.pop();
}

fn strip_keyword<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(keyword)?;
    rest.starts_with(char::is_whitespace).then(|| rest.trim_start())
}

/// Expands a glob pattern component by component inside the sysroot, so
/// every intermediate symlink is resolved against the sysroot rather than the
/// host. Results are sorted per component, as glob(3) does.
pub(crate) fn glob_in_sysroot(config: &SearchConfig, pattern: &str) -> Vec<String> {
    let options = MatchOptions { case_sensitive: true, require_literal_separator: true, require_literal_leading_dot: true };
    let mut candidates = vec![String::from("/")];
    for comp in pattern.split('/').filter(|c| !c.is_empty()) {
        let is_glob = comp.contains(['*', '?', '[']);
        let mut next = Vec::new();
        for base in &candidates {
            let join = |name: &str| if base == "/" { format!("/{name}") } else { format!("{base}/{name}") };
            if !is_glob {
                next.push(join(comp));
                continue;
            }
            let Ok(matcher) = Pattern::new(comp) else { continue };
            let Ok(dir) = canonicalize_in_sysroot(base, config) else { continue };
            let Ok(entries) = fs::read_dir(config.host_path(&dir)) else { continue };
            let mut names: Vec<String> = entries
                .filter_map(|e| e.ok()?.file_name().into_string().ok())
                .filter(|n| matcher.matches_with(n, options))
                .collect();
            names.sort();
            next.extend(names.iter().map(|n| join(n)));
        }
        candidates = next;
    }
    candidates.into_iter().filter(|c| is_regular_in_sysroot(config, c)).collect()
}

fn is_regular_in_sysroot(config: &SearchConfig, path: &str) -> bool {
    canonicalize_in_sysroot(path, config)
        .ok()
        .and_then(|p| fs::symlink_metadata(config.host_path(&p)).ok())
        .is_some_and(|m| m.is_file())
}

/// Subdirectories one level under `/lib` and `/usr/lib` that hold at least
/// one `lib*.so*` file.
pub(crate) fn discover_multiarch(config: &SearchConfig) -> Vec<String> {
    let mut found = Vec::new();
    for base in ["/lib", "/usr/lib"] {
        let Ok(base_dir) = canonicalize_in_sysroot(base, config) else { continue };
        let Ok(entries) = fs::read_dir(config.host_path(&base_dir)) else { continue };
        let mut names: Vec<String> = entries.filter_map(|e| e.ok()?.file_name().into_string().ok()).collect();
        names.sort();
        for name in names {
            let logical = format!("{base}/{name}");
            let Ok(dir) = canonicalize_in_sysroot(&logical, config) else { continue };
            let Ok(children) = fs::read_dir(config.host_path(&dir)) else { continue };
            let has_lib = children.filter_map(Result::ok).any(|c| {
                let n = c.file_name();
                let n = n.to_string_lossy();
                n.starts_with("lib") && n.contains(".so") && is_regular_in_sysroot(config, &format!("{dir}/{n}"))
            });
            if has_lib && !found.contains(&logical) {
                found.push(logical);
            }
        }
    }
    found
}
