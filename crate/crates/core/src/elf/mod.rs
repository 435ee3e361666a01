//! Native ELF reader for dynamic-linking facts.
//!
//! Only the ELF header, program headers, the dynamic segment and the dynamic
//! symbol table are consulted. Section headers are used solely as a last
//! resort for sizing the dynamic symbol table, so stripped files parse the
//! same as unstripped ones.

mod builder;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use builder::{ElfBuilder, HashStyle};
pub use parse::parse_elf;

pub const ELF_MAGIC: [u8; 4] = [0x7f, b'E', b'L', b'F'];

pub const ELFCLASS32: u8 = 1;
pub const ELFCLASS64: u8 = 2;
pub const ELFDATA2LSB: u8 = 1;
pub const ELFDATA2MSB: u8 = 2;

pub const ET_REL: u16 = 1;
pub const ET_EXEC: u16 = 2;
pub const ET_DYN: u16 = 3;

pub const PT_LOAD: u32 = 1;
pub const PT_DYNAMIC: u32 = 2;
pub const PT_INTERP: u32 = 3;

pub const DT_NULL: u64 = 0;
pub const DT_NEEDED: u64 = 1;
pub const DT_HASH: u64 = 4;
pub const DT_STRTAB: u64 = 5;
pub const DT_SYMTAB: u64 = 6;
pub const DT_STRSZ: u64 = 10;
pub const DT_SYMENT: u64 = 11;
pub const DT_SONAME: u64 = 14;
pub const DT_RPATH: u64 = 15;
pub const DT_RUNPATH: u64 = 29;
pub const DT_GNU_HASH: u64 = 0x6fff_fef5;

pub const SHT_DYNSYM: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WordSize {
    Bits32,
    Bits64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ByteOrder {
    Little,
    Big,
}

/// The `e_type` field of the ELF header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectType {
    Executable,
    SharedObject,
    Relocatable,
    Other(u16),
}

impl ObjectType {
    pub fn from_code(code: u16) -> Self {
        match code {
            ET_EXEC => ObjectType::Executable,
            ET_DYN => ObjectType::SharedObject,
            ET_REL => ObjectType::Relocatable,
            other => ObjectType::Other(other),
        }
    }

    pub fn code(self) -> u16 {
        match self {
            ObjectType::Executable => ET_EXEC,
            ObjectType::SharedObject => ET_DYN,
            ObjectType::Relocatable => ET_REL,
            ObjectType::Other(code) => code,
        }
    }
}

/// Dynamic-linking facts of one ELF file.
///
/// All strings are copied verbatim from the file's string table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElfSummary {
    pub word_size: WordSize,
    pub byte_order: ByteOrder,
    pub object_type: ObjectType,
    /// A `PT_INTERP` program header exists.
    pub has_interpreter: bool,
    pub soname: Option<String>,
    /// `DT_NEEDED` entries in file order.
    pub needed: Vec<String>,
    /// Raw `DT_RPATH` value, not split.
    pub rpath: Option<String>,
    /// Raw `DT_RUNPATH` value, not split.
    pub runpath: Option<String>,
    /// Non-local dynamic symbols with an undefined section index.
    pub undefined_symbols: BTreeSet<String>,
    /// The weak subset of `undefined_symbols`; the loader tolerates their absence.
    pub weak_undefined: BTreeSet<String>,
    /// Defined global and weak dynamic symbols.
    pub exported_symbols: BTreeSet<String>,
}

impl ElfSummary {
    /// An empty summary with the given identity, used when a file has no
    /// dynamic segment.
    pub fn empty(word_size: WordSize, byte_order: ByteOrder, object_type: ObjectType) -> Self {
        ElfSummary {
            word_size,
            byte_order,
            object_type,
            has_interpreter: false,
            soname: None,
            needed: Vec::new(),
            rpath: None,
            runpath: None,
            undefined_symbols: BTreeSet::new(),
            weak_undefined: BTreeSet::new(),
            exported_symbols: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElfError {
    /// Wrong magic. Scanners skip such files silently.
    #[error("not an ELF file")]
    NotElf,
    #[error("truncated ELF: {what} at offset {offset:#x} runs past end of file")]
    Truncated { what: &'static str, offset: u64 },
    #[error("malformed ELF: {0}")]
    Malformed(String),
}

/// Graph-level classification of a scanned file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    ExecutableBinary,
    SharedLibrary,
    NotElf,
    ElfOther,
}

impl FileKind {
    /// Stable storage code.
    pub fn as_str(self) -> &'static str {
        match self {
            FileKind::ExecutableBinary => "executable",
            FileKind::SharedLibrary => "library",
            FileKind::NotElf => "not_elf",
            FileKind::ElfOther => "other",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        Some(match code {
            "executable" => FileKind::ExecutableBinary,
            "library" => FileKind::SharedLibrary,
            "not_elf" => FileKind::NotElf,
            "other" => FileKind::ElfOther,
            _ => return None,
        })
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a parsed file.
///
/// `ET_DYN` objects carrying a program interpreter are position-independent
/// executables. The path is never consulted; it is accepted so callers can
/// keep the reporting context next to the decision.
pub fn classify_kind(summary: &ElfSummary, _path: &str) -> FileKind {
    match summary.object_type {
        ObjectType::Executable => FileKind::ExecutableBinary,
        ObjectType::SharedObject if summary.has_interpreter => FileKind::ExecutableBinary,
        ObjectType::SharedObject => FileKind::SharedLibrary,
        ObjectType::Relocatable | ObjectType::Other(_) => FileKind::ElfOther,
    }
}

/// Classification of a parse outcome, mapping `NotElf` to [`FileKind::NotElf`].
pub fn classify_result(result: &Result<ElfSummary, ElfError>, path: &str) -> Option<FileKind> {
    match result {
        Ok(summary) => Some(classify_kind(summary, path)),
        Err(ElfError::NotElf) => Some(FileKind::NotElf),
        Err(_) => None,
    }
}

/// Strips a GNU symbol version suffix (`memcpy@GLIBC_2.14`, `foo@@V2`).
pub fn bare_symbol_name(name: &str) -> &str {
    match name.find('@') {
        Some(0) | None => name,
        Some(at) => &name[..at],
    }
}
