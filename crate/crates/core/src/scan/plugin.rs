use std::fmt;
use std::sync::Arc;

use crate::elf::{classify_kind, parse_elf, ElfError, ElfSummary, FileKind, ELF_MAGIC};
use crate::resolve::{Resolution, Resolver};

/// Facts a plugin reports about one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFacts {
    pub kind: FileKind,
    pub soname: Option<String>,
    /// Present for ELF files; feeds the symbol coverage analysis.
    pub summary: Option<ElfSummary>,
}

/// A plugin's output: the node and one resolved claim per dependency, in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub facts: NodeFacts,
    pub claims: Vec<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PluginError(pub String);

impl fmt::Display for PluginError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PluginError {}

impl From<ElfError> for PluginError {
    fn from(err: ElfError) -> Self {
        PluginError(err.to_string())
    }
}

/// A file-type specific extractor.
///
/// Implementations are called concurrently from scan workers and must not
/// rely on call order.
pub trait Plugin: Send + Sync {
    fn name(&self) -> &str;

    /// Decides from the sysroot path and up to the first 64 bytes whether this
    /// plugin handles the file.
    fn supports(&self, path: &str, header: &[u8]) -> bool;

    /// Extracts facts from the full file. `Ok(None)` declines the file after
    /// all, which is not counted as an error.
    fn extract(&self, path: &str, bytes: &[u8], resolver: &Resolver) -> Result<Option<Extraction>, PluginError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("a plugin named {0:?} is already registered")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PluginHandle {
    pub index: usize,
    pub name: String,
}

/// Registered plugins in priority order.
#[derive(Clone, Default)]
pub struct PluginRegistry {
    plugins: Vec<Arc<dyn Plugin>>,
}

impl fmt::Debug for PluginRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.plugins.iter().map(|p| p.name())).finish()
    }
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding only the ELF plugin.
    pub fn with_elf() -> Self {
        let mut registry = Self::new();
        registry.register(ElfPlugin).expect("empty registry");
        registry
    }

    pub fn register(&mut self, plugin: impl Plugin + 'static) -> Result<PluginHandle, RegistryError> {
        self.register_arc(Arc::new(plugin))
    }

    pub fn register_arc(&mut self, plugin: Arc<dyn Plugin>) -> Result<PluginHandle, RegistryError> {
        if self.plugins.iter().any(|p| p.name() == plugin.name()) {
            return Err(RegistryError::DuplicateName(plugin.name().to_owned()));
        }
        let handle = PluginHandle { index: self.plugins.len(), name: plugin.name().to_owned() };
        self.plugins.push(plugin);
        Ok(handle)
    }

    pub fn len(&self) -> usize {
        self.plugins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plugins.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&dyn Plugin> {
        self.plugins.get(index).map(|p| p.as_ref())
    }

    /// Indices of every plugin that claims the file, in priority order.
    pub fn matching(&self, path: &str, header: &[u8]) -> Vec<usize> {
        (0..self.plugins.len()).filter(|&i| self.plugins[i].supports(path, header)).collect()
    }
}

/// Extracts `DT_NEEDED` presence dependencies from ELF files.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElfPlugin;

impl Plugin for ElfPlugin {
    fn name(&self) -> &str {
        "elf"
    }

    fn supports(&self, _path: &str, header: &[u8]) -> bool {
        header.starts_with(&ELF_MAGIC)
    }

    fn extract(&self, path: &str, bytes: &[u8], resolver: &Resolver) -> Result<Option<Extraction>, PluginError> {
        let summary = match parse_elf(bytes) {
            Ok(summary) => summary,
            Err(ElfError::NotElf) => return Ok(None),
            Err(err) => return Err(err.into()),
        };
        let kind = classify_kind(&summary, path);
        let claims = summary.needed.iter().map(|name| resolver.resolve(name, &summary, path)).collect();
        Ok(Some(Extraction {
            facts: NodeFacts { kind, soname: summary.soname.clone(), summary: Some(summary) },
            claims,
        }))
    }
}
