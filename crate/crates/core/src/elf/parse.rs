use std::collections::BTreeSet;

use super::*;

const EI_NIDENT: usize = 16;

const SHN_UNDEF: u16 = 0;
const STB_LOCAL: u8 = 0;
const STB_GLOBAL: u8 = 1;
const STB_WEAK: u8 = 2;
const STB_GNU_UNIQUE: u8 = 10;
const STT_SECTION: u8 = 3;
const STT_FILE: u8 = 4;

/// Bounds-checked, endian-aware view over the file bytes.
#[derive(Clone, Copy)]
struct Reader<'a> {
    data: &'a [u8],
    big: bool,
    wide: bool,
}

impl<'a> Reader<'a> {
    fn bytes(&self, offset: u64, len: u64, what: &'static str) -> Result<&'a [u8], ElfError> {
        let end = offset.checked_add(len).ok_or(ElfError::Truncated { what, offset })?;
        if end > self.data.len() as u64 {
            return Err(ElfError::Truncated { what, offset });
        }
        Ok(&self.data[offset as usize..end as usize])
    }

    fn u16(&self, offset: u64, what: &'static str) -> Result<u16, ElfError> {
        let b: [u8; 2] = self.bytes(offset, 2, what)?.try_into().unwrap();
        Ok(if self.big { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, offset: u64, what: &'static str) -> Result<u32, ElfError> {
        let b: [u8; 4] = self.bytes(offset, 4, what)?.try_into().unwrap();
        Ok(if self.big { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn u64(&self, offset: u64, what: &'static str) -> Result<u64, ElfError> {
        let b: [u8; 8] = self.bytes(offset, 8, what)?.try_into().unwrap();
        Ok(if self.big { u64::from_be_bytes(b) } else { u64::from_le_bytes(b) })
    }

    /// Address-sized field: 4 bytes for ELFCLASS32, 8 for ELFCLASS64.
    fn word(&self, offset: u64, what: &'static str) -> Result<u64, ElfError> {
        if self.wide {
            self.u64(offset, what)
        } else {
            self.u32(offset, what).map(u64::from)
        }
    }

    fn word_len(&self) -> u64 {
        if self.wide {
            8
        } else {
            4
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ProgramHeader {
    kind: u32,
    offset: u64,
    vaddr: u64,
    filesz: u64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    offset: u64,
    vaddr: u64,
    filesz: u64,
}

/// `PT_LOAD` segments, used to translate virtual addresses in dynamic tags.
struct AddressMap(Vec<Segment>);

impl AddressMap {
    /// File offset of `addr` and the file offset where its segment ends.
    fn translate(&self, addr: u64) -> Option<(u64, u64)> {
        self.0.iter().find_map(|seg| {
            let delta = addr.checked_sub(seg.vaddr)?;
            (delta < seg.filesz).then(|| (seg.offset + delta, seg.offset.saturating_add(seg.filesz)))
        })
    }
}

#[derive(Default)]
struct DynamicTags {
    needed: Vec<u64>,
    soname: Option<u64>,
    rpath: Option<u64>,
    runpath: Option<u64>,
    strtab: Option<u64>,
    strsz: Option<u64>,
    symtab: Option<u64>,
    syment: Option<u64>,
    hash: Option<u64>,
    gnu_hash: Option<u64>,
}

/// Parses the dynamic-linking facts out of a complete file image.
pub fn parse_elf(bytes: &[u8]) -> Result<ElfSummary, ElfError> {
    if bytes.len() < 4 || bytes[..4] != ELF_MAGIC {
        return Err(ElfError::NotElf);
    }
    if bytes.len() < EI_NIDENT {
        return Err(ElfError::Truncated { what: "e_ident", offset: 0 });
    }
    let word_size = match bytes[4] {
        ELFCLASS32 => WordSize::Bits32,
        ELFCLASS64 => WordSize::Bits64,
        other => return Err(ElfError::Malformed(format!("unknown EI_CLASS {other}"))),
    };
    let byte_order = match bytes[5] {
        ELFDATA2LSB => ByteOrder::Little,
        ELFDATA2MSB => ByteOrder::Big,
        other => return Err(ElfError::Malformed(format!("unknown EI_DATA {other}"))),
    };
    let r = Reader {
        data: bytes,
        big: byte_order == ByteOrder::Big,
        wide: word_size == WordSize::Bits64,
    };

    let ehdr_len = if r.wide { 64 } else { 52 };
    r.bytes(0, ehdr_len, "ELF header")?;
    let object_type = ObjectType::from_code(r.u16(16, "e_type")?);
    let (phoff, shoff, flags_at) = if r.wide {
        (r.u64(32, "e_phoff")?, r.u64(40, "e_shoff")?, 48)
    } else {
        (u64::from(r.u32(28, "e_phoff")?), u64::from(r.u32(32, "e_shoff")?), 36)
    };
    let phentsize = u64::from(r.u16(flags_at + 6, "e_phentsize")?);
    let phnum = u64::from(r.u16(flags_at + 8, "e_phnum")?);
    let shentsize = u64::from(r.u16(flags_at + 10, "e_shentsize")?);
    let shnum = u64::from(r.u16(flags_at + 12, "e_shnum")?);

    let mut summary = ElfSummary::empty(word_size, byte_order, object_type);
    let phdrs = read_program_headers(&r, phoff, phentsize, phnum)?;
    summary.has_interpreter = phdrs.iter().any(|ph| ph.kind == PT_INTERP);

    let Some(dynamic) = phdrs.iter().find(|ph| ph.kind == PT_DYNAMIC) else {
        return Ok(summary);
    };
    let map = AddressMap(
        phdrs
            .iter()
            .filter(|ph| ph.kind == PT_LOAD)
            .map(|ph| Segment { offset: ph.offset, vaddr: ph.vaddr, filesz: ph.filesz })
            .collect(),
    );
    let tags = read_dynamic(&r, dynamic)?;

    let has_strings = !tags.needed.is_empty()
        || tags.soname.is_some()
        || tags.rpath.is_some()
        || tags.runpath.is_some()
        || tags.symtab.is_some();
    if !has_strings {
        return Ok(summary);
    }
    let strtab = StringTable::locate(&r, &map, &tags)?;

    for &idx in &tags.needed {
        let name = strtab.get(idx)?;
        if name.is_empty() {
            return Err(ElfError::Malformed("empty DT_NEEDED name".into()));
        }
        summary.needed.push(name);
    }
    summary.soname = tags.soname.map(|idx| strtab.get(idx)).transpose()?.filter(|s| !s.is_empty());
    summary.rpath = tags.rpath.map(|idx| strtab.get(idx)).transpose()?;
    summary.runpath = tags.runpath.map(|idx| strtab.get(idx)).transpose()?;

    if let Some(symtab_addr) = tags.symtab {
        read_symbols(&r, &map, &tags, symtab_addr, &strtab, shoff, shentsize, shnum, &mut summary)?;
    }
    Ok(summary)
}

fn read_program_headers(
    r: &Reader<'_>,
    phoff: u64,
    phentsize: u64,
    phnum: u64,
) -> Result<Vec<ProgramHeader>, ElfError> {
    if phnum == 0 {
        return Ok(Vec::new());
    }
    let min = if r.wide { 56 } else { 32 };
    if phentsize < min {
        return Err(ElfError::Malformed(format!("e_phentsize {phentsize} below {min}")));
    }
    r.bytes(phoff, phentsize * phnum, "program header table")?;
    (0..phnum)
        .map(|i| {
            let at = phoff + i * phentsize;
            let kind = r.u32(at, "p_type")?;
            Ok(if r.wide {
                ProgramHeader {
                    kind,
                    offset: r.u64(at + 8, "p_offset")?,
                    vaddr: r.u64(at + 16, "p_vaddr")?,
                    filesz: r.u64(at + 32, "p_filesz")?,
                }
            } else {
                ProgramHeader {
                    kind,
                    offset: u64::from(r.u32(at + 4, "p_offset")?),
                    vaddr: u64::from(r.u32(at + 8, "p_vaddr")?),
                    filesz: u64::from(r.u32(at + 16, "p_filesz")?),
                }
            })
        })
        .collect()
}

fn read_dynamic(r: &Reader<'_>, dynamic: &ProgramHeader) -> Result<DynamicTags, ElfError> {
    r.bytes(dynamic.offset, dynamic.filesz, "dynamic segment")?;
    let entsize = 2 * r.word_len();
    let mut tags = DynamicTags::default();
    for i in 0..dynamic.filesz / entsize {
        let at = dynamic.offset + i * entsize;
        let tag = r.word(at, "d_tag")?;
        let val = r.word(at + r.word_len(), "d_val")?;
        match tag {
            DT_NULL => break,
            DT_NEEDED => tags.needed.push(val),
            DT_SONAME => tags.soname = Some(val),
            DT_RPATH => tags.rpath = Some(val),
            DT_RUNPATH => tags.runpath = Some(val),
            DT_STRTAB => tags.strtab = Some(val),
            DT_STRSZ => tags.strsz = Some(val),
            DT_SYMTAB => tags.symtab = Some(val),
            DT_SYMENT => tags.syment = Some(val),
            DT_HASH => tags.hash = Some(val),
            DT_GNU_HASH => tags.gnu_hash = Some(val),
            _ => {}
        }
    }
    Ok(tags)
}

struct StringTable<'a> {
    bytes: &'a [u8],
}

impl<'a> StringTable<'a> {
    fn locate(r: &Reader<'a>, map: &AddressMap, tags: &DynamicTags) -> Result<Self, ElfError> {
        let addr = tags
            .strtab
            .ok_or_else(|| ElfError::Malformed("dynamic strings referenced without DT_STRTAB".into()))?;
        let (offset, segment_end) = map
            .translate(addr)
            .ok_or_else(|| ElfError::Malformed(format!("DT_STRTAB {addr:#x} maps into no PT_LOAD")))?;
        let len = match tags.strsz {
            Some(size) => size,
            None => segment_end.min(r.data.len() as u64).saturating_sub(offset),
        };
        Ok(StringTable { bytes: r.bytes(offset, len, "dynamic string table")? })
    }

    fn get(&self, index: u64) -> Result<String, ElfError> {
        let start = usize::try_from(index)
            .ok()
            .filter(|&i| i < self.bytes.len())
            .ok_or_else(|| ElfError::Malformed(format!("string index {index} outside string table")))?;
        let rest = &self.bytes[start..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| ElfError::Malformed(format!("unterminated string at index {index}")))?;
        String::from_utf8(rest[..nul].to_vec())
            .map_err(|_| ElfError::Malformed(format!("non UTF-8 string at index {index}")))
    }
}

#[allow(clippy::too_many_arguments)]
fn read_symbols(
    r: &Reader<'_>,
    map: &AddressMap,
    tags: &DynamicTags,
    symtab_addr: u64,
    strtab: &StringTable<'_>,
    shoff: u64,
    shentsize: u64,
    shnum: u64,
    summary: &mut ElfSummary,
) -> Result<(), ElfError> {
    let (symtab_off, _) = map
        .translate(symtab_addr)
        .ok_or_else(|| ElfError::Malformed(format!("DT_SYMTAB {symtab_addr:#x} maps into no PT_LOAD")))?;
    let min_entsize = if r.wide { 24 } else { 16 };
    let entsize = tags.syment.unwrap_or(min_entsize);
    if entsize < min_entsize {
        return Err(ElfError::Malformed(format!("DT_SYMENT {entsize} below {min_entsize}")));
    }
    let count = symbol_count(r, map, tags, symtab_addr, entsize, shoff, shentsize, shnum)?;
    let table_len = count
        .checked_mul(entsize)
        .ok_or_else(|| ElfError::Malformed("symbol table size overflows".into()))?;
    r.bytes(symtab_off, table_len, "dynamic symbol table")?;

    let mut undefined = BTreeSet::new();
    let mut weak = BTreeSet::new();
    let mut exported = BTreeSet::new();
    for i in 1..count {
        let at = symtab_off + i * entsize;
        let (name, info, shndx) = if r.wide {
            (r.u32(at, "st_name")?, r.bytes(at + 4, 1, "st_info")?[0], r.u16(at + 6, "st_shndx")?)
        } else {
            (r.u32(at, "st_name")?, r.bytes(at + 12, 1, "st_info")?[0], r.u16(at + 14, "st_shndx")?)
        };
        let binding = info >> 4;
        let sym_type = info & 0xf;
        if binding == STB_LOCAL || sym_type == STT_SECTION || sym_type == STT_FILE || name == 0 {
            continue;
        }
        let name = strtab.get(u64::from(name))?;
        if name.is_empty() {
            continue;
        }
        if shndx == SHN_UNDEF {
            if binding == STB_WEAK {
                weak.insert(name.clone());
            }
            undefined.insert(name);
        } else if matches!(binding, STB_GLOBAL | STB_WEAK | STB_GNU_UNIQUE) {
            exported.insert(name);
        }
    }
    // A definition wins over an import of the same name in one file.
    undefined.retain(|n| !exported.contains(n));
    weak.retain(|n| undefined.contains(n));
    summary.undefined_symbols = undefined;
    summary.weak_undefined = weak;
    summary.exported_symbols = exported;
    Ok(())
}

/// Number of entries in the dynamic symbol table, including the null entry.
///
/// Sources in order: `DT_HASH` nchain, `DT_GNU_HASH` chain walk, a
/// `SHT_DYNSYM` section, and finally the gap up to `DT_STRTAB` when the string
/// table directly follows the symbols.
#[allow(clippy::too_many_arguments)]
fn symbol_count(
    r: &Reader<'_>,
    map: &AddressMap,
    tags: &DynamicTags,
    symtab_addr: u64,
    entsize: u64,
    shoff: u64,
    shentsize: u64,
    shnum: u64,
) -> Result<u64, ElfError> {
    if let Some(addr) = tags.hash {
        let (off, _) = map
            .translate(addr)
            .ok_or_else(|| ElfError::Malformed(format!("DT_HASH {addr:#x} maps into no PT_LOAD")))?;
        return r.u32(off + 4, "hash nchain").map(u64::from);
    }
    // With every bucket empty the GNU table only bounds the count from below:
    // linkers emit symoffset 1 for executables that hash nothing.
    let mut floor = 0;
    if let Some(addr) = tags.gnu_hash {
        let (off, _) = map
            .translate(addr)
            .ok_or_else(|| ElfError::Malformed(format!("DT_GNU_HASH {addr:#x} maps into no PT_LOAD")))?;
        match gnu_hash_count(r, off)? {
            GnuCount::Exact(n) => return Ok(n),
            GnuCount::AtLeast(n) => floor = n,
        }
    }
    if let Some(count) = dynsym_section_count(r, shoff, shentsize, shnum) {
        return Ok(count);
    }
    match tags.strtab {
        Some(strtab) if strtab > symtab_addr => Ok(((strtab - symtab_addr) / entsize).max(floor)),
        _ => Ok(floor),
    }
}

enum GnuCount {
    Exact(u64),
    AtLeast(u64),
}

fn gnu_hash_count(r: &Reader<'_>, off: u64) -> Result<GnuCount, ElfError> {
    let nbuckets = u64::from(r.u32(off, "gnu hash nbuckets")?);
    let symoffset = u64::from(r.u32(off + 4, "gnu hash symoffset")?);
    let bloom_size = u64::from(r.u32(off + 8, "gnu hash bloom size")?);
    let buckets = off + 16 + bloom_size * r.word_len();
    r.bytes(buckets, nbuckets * 4, "gnu hash buckets")?;
    let mut last = 0u64;
    for i in 0..nbuckets {
        last = last.max(u64::from(r.u32(buckets + i * 4, "gnu hash bucket")?));
    }
    if last == 0 {
        return Ok(GnuCount::AtLeast(symoffset));
    }
    if last < symoffset {
        return Err(ElfError::Malformed("gnu hash bucket below symoffset".into()));
    }
    let chains = buckets + nbuckets * 4;
    let mut index = last;
    loop {
        let hash = r.u32(chains + (index - symoffset) * 4, "gnu hash chain")?;
        index += 1;
        if hash & 1 == 1 {
            return Ok(GnuCount::Exact(index));
        }
    }
}

/// Size of the `SHT_DYNSYM` section, if a usable section table exists.
fn dynsym_section_count(r: &Reader<'_>, shoff: u64, shentsize: u64, shnum: u64) -> Option<u64> {
    let min = if r.wide { 64 } else { 40 };
    if shoff == 0 || shnum == 0 || shentsize < min {
        return None;
    }
    r.bytes(shoff, shentsize.checked_mul(shnum)?, "section headers").ok()?;
    (0..shnum).find_map(|i| {
        let at = shoff + i * shentsize;
        if r.u32(at + 4, "sh_type").ok()? != SHT_DYNSYM {
            return None;
        }
        let (size, entsize) = if r.wide {
            (r.u64(at + 32, "sh_size").ok()?, r.u64(at + 56, "sh_entsize").ok()?)
        } else {
            (u64::from(r.u32(at + 20, "sh_size").ok()?), u64::from(r.u32(at + 36, "sh_entsize").ok()?))
        };
        (entsize > 0).then(|| size / entsize)
    })
}
