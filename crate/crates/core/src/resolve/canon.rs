use std::collections::VecDeque;
use std::fs;

use super::SearchConfig;

/// Link traversals allowed before a chain is declared cyclic.
pub const MAX_SYMLINK_HOPS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("symlink loop while resolving {path}")]
pub struct SymlinkLoop {
    pub path: String,
}

/// Resolves symlinks in `path` as if the sysroot were `/`.
///
/// Absolute link targets are re-rooted under the sysroot, relative targets are
/// taken against the link's directory, and `..` is clamped at the root. Missing
/// components are kept lexically. The result is absolute and sysroot-relative.
pub fn canonicalize_in_sysroot(path: &str, config: &SearchConfig) -> Result<String, SymlinkLoop> {
    let mut pending: VecDeque<String> = components(path).map(str::to_owned).collect();
    let mut resolved: Vec<String> = Vec::new();
    let mut hops = 0usize;
    // Once a component is missing nothing below it can be a link.
    let mut exists = true;

    while let Some(comp) = pending.pop_front() {
        match comp.as_str() {
            "." => continue,
            ".." => {
                resolved.pop();
                exists = true;
                continue;
            }
            _ => {}
        }
        resolved.push(comp);
        if !exists {
            continue;
        }
        let host = config.sysroot.join(resolved.join("/"));
        let meta = match fs::symlink_metadata(&host) {
            Ok(meta) => meta,
            Err(_) => {
                exists = false;
                continue;
            }
        };
        if !meta.file_type().is_symlink() {
            continue;
        }
        hops += 1;
        if hops > MAX_SYMLINK_HOPS {
            return Err(SymlinkLoop { path: path.to_owned() });
        }
        let Ok(target) = fs::read_link(&host) else {
            exists = false;
            continue;
        };
        let target = target.to_string_lossy().into_owned();
        resolved.pop();
        if target.starts_with('/') {
            resolved.clear();
        }
        for (i, part) in components(&target).enumerate() {
            pending.insert(i, part.to_owned());
        }
    }
    Ok(format!("/{}", resolved.join("/")))
}

fn components(path: &str) -> impl Iterator<Item = &str> {
    path.split('/').filter(|c| !c.is_empty())
}
