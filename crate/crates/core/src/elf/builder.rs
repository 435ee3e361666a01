//! Byte-level ELF image writer for fixtures, benchmarks and generated trees.
//!
//! Images carry only what a dynamic loader looks at: program headers, an
//! interpreter string, the dynamic segment, `.dynsym`/`.dynstr` and the hash
//! tables. Section headers are optional.

use super::*;

/// Which symbol hash tables to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashStyle {
    Sysv,
    Gnu,
    Both,
    /// No hash table; the symbol count is only recoverable from section
    /// headers or the symtab/strtab gap.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SymKind {
    Undefined { weak: bool },
    Defined { weak: bool },
    Local,
}

#[derive(Debug, Clone)]
struct Sym {
    name: String,
    kind: SymKind,
}

#[derive(Debug, Clone)]
pub struct ElfBuilder {
    word: WordSize,
    order: ByteOrder,
    object_type: ObjectType,
    interpreter: Option<String>,
    needed: Vec<String>,
    soname: Option<String>,
    rpath: Option<String>,
    runpath: Option<String>,
    symbols: Vec<Sym>,
    hash: HashStyle,
    sections: bool,
    split: bool,
    dynamic: bool,
    pad_to: usize,
    strtab_override: Option<u64>,
}

const SHN_ABS: u16 = 0xfff1;
const STT_FUNC: u8 = 2;
const SHT_PROGBITS: u32 = 1;
const SHT_STRTAB: u32 = 3;
const SHT_HASH: u32 = 5;
const SHT_DYNAMIC: u32 = 6;
const SHT_GNU_HASH: u32 = 0x6fff_fff6;
const SHF_WRITE: u64 = 1;
const SHF_ALLOC: u64 = 2;
const SPLIT_GAP: u64 = 0x10000;

impl ElfBuilder {
    pub fn new(word: WordSize, order: ByteOrder) -> Self {
        ElfBuilder {
            word,
            order,
            object_type: ObjectType::SharedObject,
            interpreter: None,
            needed: Vec::new(),
            soname: None,
            rpath: None,
            runpath: None,
            symbols: Vec::new(),
            hash: HashStyle::Gnu,
            sections: true,
            split: false,
            dynamic: true,
            pad_to: 0,
            strtab_override: None,
        }
    }

    /// 64-bit little-endian `ET_DYN` library.
    pub fn library(soname: &str) -> Self {
        Self::new(WordSize::Bits64, ByteOrder::Little).soname(soname)
    }

    /// 64-bit little-endian position-independent executable.
    pub fn executable() -> Self {
        Self::new(WordSize::Bits64, ByteOrder::Little).interpreter("/lib64/ld-linux-x86-64.so.2")
    }

    pub fn object_type(mut self, ty: ObjectType) -> Self {
        self.object_type = ty;
        self
    }

    pub fn interpreter(mut self, path: &str) -> Self {
        self.interpreter = Some(path.to_owned());
        self
    }

    pub fn needed(mut self, name: &str) -> Self {
        self.needed.push(name.to_owned());
        self
    }

    pub fn needed_all<'a>(mut self, names: impl IntoIterator<Item = &'a str>) -> Self {
        self.needed.extend(names.into_iter().map(str::to_owned));
        self
    }

    pub fn soname(mut self, name: &str) -> Self {
        self.soname = Some(name.to_owned());
        self
    }

    pub fn rpath(mut self, value: &str) -> Self {
        self.rpath = Some(value.to_owned());
        self
    }

    pub fn runpath(mut self, value: &str) -> Self {
        self.runpath = Some(value.to_owned());
        self
    }

    pub fn import(self, name: &str) -> Self {
        self.symbol(name, SymKind::Undefined { weak: false })
    }

    pub fn import_weak(self, name: &str) -> Self {
        self.symbol(name, SymKind::Undefined { weak: true })
    }

    pub fn export(self, name: &str) -> Self {
        self.symbol(name, SymKind::Defined { weak: false })
    }

    pub fn export_weak(self, name: &str) -> Self {
        self.symbol(name, SymKind::Defined { weak: true })
    }

    pub fn local(self, name: &str) -> Self {
        self.symbol(name, SymKind::Local)
    }

    fn symbol(mut self, name: &str, kind: SymKind) -> Self {
        self.symbols.push(Sym { name: name.to_owned(), kind });
        self
    }

    pub fn hash_style(mut self, style: HashStyle) -> Self {
        self.hash = style;
        self
    }

    pub fn section_headers(mut self, on: bool) -> Self {
        self.sections = on;
        self
    }

    /// Places the dynamic data in a second `PT_LOAD` whose address/offset delta
    /// differs from the first.
    pub fn split_segments(mut self, on: bool) -> Self {
        self.split = on;
        self
    }

    /// Omits `PT_DYNAMIC` entirely (a static binary).
    pub fn no_dynamic(mut self) -> Self {
        self.dynamic = false;
        self
    }

    /// Zero-pads the image to at least `len` bytes.
    pub fn pad_to(mut self, len: usize) -> Self {
        self.pad_to = len;
        self
    }

    /// Writes this value as `DT_STRTAB` instead of the real address.
    pub fn strtab_address_override(mut self, addr: u64) -> Self {
        self.strtab_override = Some(addr);
        self
    }

    pub fn build(&self) -> Vec<u8> {
        Layout::new(self).write()
    }
}

fn sysv_hash(name: &str) -> u32 {
    let mut h: u32 = 0;
    for &c in name.as_bytes() {
        h = (h << 4).wrapping_add(u32::from(c));
        let g = h & 0xf000_0000;
        if g != 0 {
            h ^= g >> 24;
        }
        h &= !g;
    }
    h
}

fn gnu_hash(name: &str) -> u32 {
    name.bytes().fold(5381u32, |h, c| h.wrapping_mul(33).wrapping_add(u32::from(c)))
}

#[derive(Default)]
struct StrTab {
    bytes: Vec<u8>,
}

impl StrTab {
    fn new() -> Self {
        StrTab { bytes: vec![0] }
    }

    fn add(&mut self, s: &str) -> u32 {
        if s.is_empty() {
            return 0;
        }
        let needle: Vec<u8> = s.bytes().chain(std::iter::once(0)).collect();
        if let Some(pos) = self.bytes.windows(needle.len()).position(|w| w == needle.as_slice()) {
            if pos == 0 || self.bytes[pos - 1] == 0 {
                return pos as u32;
            }
        }
        let at = self.bytes.len() as u32;
        self.bytes.extend_from_slice(&needle);
        at
    }
}

struct Out {
    buf: Vec<u8>,
    big: bool,
    wide: bool,
}

impl Out {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        let b = if self.big { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&b);
    }
    fn u32(&mut self, v: u32) {
        let b = if self.big { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&b);
    }
    fn u64(&mut self, v: u64) {
        let b = if self.big { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&b);
    }
    fn word(&mut self, v: u64) {
        if self.wide {
            self.u64(v)
        } else {
            self.u32(v as u32)
        }
    }
    fn align(&mut self, to: usize) {
        while !self.buf.len().is_multiple_of(to) {
            self.buf.push(0);
        }
    }
    fn pos(&self) -> u64 {
        self.buf.len() as u64
    }
}

struct SectionHeader {
    name: u32,
    kind: u32,
    flags: u64,
    addr: u64,
    offset: u64,
    size: u64,
    link: u32,
    info: u32,
    align: u64,
    entsize: u64,
}

/// Precomputed contents; `write` assigns offsets.
struct Layout<'a> {
    b: &'a ElfBuilder,
    wide: bool,
    dynstr: StrTab,
    /// Symbol table order: locals, imports, exports (exports sorted by GNU bucket).
    syms: Vec<(u32, &'a Sym)>,
    first_nonlocal: u32,
    first_defined: u32,
    gnu_buckets: u32,
    emit_symtab: bool,
}

impl<'a> Layout<'a> {
    fn new(b: &'a ElfBuilder) -> Self {
        let mut dynstr = StrTab::new();
        for n in &b.needed {
            dynstr.add(n);
        }
        for s in [&b.soname, &b.rpath, &b.runpath].into_iter().flatten() {
            dynstr.add(s);
        }
        let locals = b.symbols.iter().filter(|s| s.kind == SymKind::Local);
        let imports = b.symbols.iter().filter(|s| matches!(s.kind, SymKind::Undefined { .. }));
        let mut exports: Vec<&Sym> = b.symbols.iter().filter(|s| matches!(s.kind, SymKind::Defined { .. })).collect();
        let gnu_buckets = exports.len().max(1) as u32;
        exports.sort_by_key(|s| gnu_hash(&s.name) % gnu_buckets);
        let nlocal = locals.clone().count() as u32;
        let nimport = imports.clone().count() as u32;
        let syms: Vec<(u32, &Sym)> = locals
            .chain(imports)
            .chain(exports)
            .map(|s| (dynstr.add(&s.name), s))
            .collect();
        Layout {
            b,
            wide: b.word == WordSize::Bits64,
            dynstr,
            emit_symtab: !syms.is_empty() || b.hash != HashStyle::None,
            syms,
            first_nonlocal: 1 + nlocal,
            first_defined: 1 + nlocal + nimport,
            gnu_buckets,
        }
    }

    fn base(&self) -> u64 {
        match (self.b.object_type, self.wide) {
            (ObjectType::Executable, true) => 0x40_0000,
            (ObjectType::Executable, false) => 0x804_8000,
            _ => 0,
        }
    }

    fn nsyms(&self) -> u32 {
        1 + self.syms.len() as u32
    }

    fn sysv_table(&self) -> Vec<u32> {
        let nchain = self.nsyms();
        let nbucket = (nchain / 2).max(1);
        let mut buckets = vec![0u32; nbucket as usize];
        let mut chains = vec![0u32; nchain as usize];
        for (i, (_, sym)) in self.syms.iter().enumerate() {
            let idx = i as u32 + 1;
            let slot = (sysv_hash(&sym.name) % nbucket) as usize;
            // Append at bucket head; lookup order does not matter here.
            chains[idx as usize] = buckets[slot];
            buckets[slot] = idx;
        }
        let mut out = vec![nbucket, nchain];
        out.extend(buckets);
        out.extend(chains);
        out
    }

    fn write_gnu(&self, out: &mut Out) {
        let nb = self.gnu_buckets;
        let shift = 6u32;
        let bits = if self.wide { 64 } else { 32 };
        let defined: Vec<&Sym> = self.syms[(self.first_defined - 1) as usize..].iter().map(|(_, s)| *s).collect();
        out.u32(nb);
        out.u32(self.first_defined);
        out.u32(1);
        out.u32(shift);
        let mut bloom = 0u64;
        for s in &defined {
            let h = gnu_hash(&s.name);
            bloom |= 1u64 << (h % bits);
            bloom |= 1u64 << ((h >> shift) % bits);
        }
        out.word(bloom);
        let mut buckets = vec![0u32; nb as usize];
        for (i, s) in defined.iter().enumerate().rev() {
            buckets[(gnu_hash(&s.name) % nb) as usize] = self.first_defined + i as u32;
        }
        for b in buckets {
            out.u32(b);
        }
        for (i, s) in defined.iter().enumerate() {
            let h = gnu_hash(&s.name);
            let last = defined.get(i + 1).is_none_or(|n| gnu_hash(&n.name) % nb != h % nb);
            out.u32(if last { h | 1 } else { h & !1 });
        }
    }

    fn write(self) -> Vec<u8> {
        let b = self.b;
        let wide = self.wide;
        let mut out = Out { buf: Vec::new(), big: b.order == ByteOrder::Big, wide };
        let ehdr_len: u64 = if wide { 64 } else { 52 };
        let phent: u64 = if wide { 56 } else { 32 };
        let nloads = if b.split { 2 } else { 1 };
        let phnum = nloads + u64::from(b.interpreter.is_some()) + u64::from(b.dynamic);

        // Body first, header and program headers patched in at the end.
        out.buf.resize((ehdr_len + phnum * phent) as usize, 0);
        let interp = b.interpreter.as_ref().map(|path| {
            let at = out.pos();
            out.buf.extend_from_slice(path.as_bytes());
            out.u8(0);
            (at, path.len() as u64 + 1)
        });
        out.align(16);
        let split_at = if b.split { out.pos() } else { u64::MAX };
        let base = self.base();
        let addr = |off: u64| if off >= split_at { base + SPLIT_GAP + off } else { base + off };

        let mut dynsym = None;
        let mut dynstr = None;
        let mut sysv = None;
        let mut gnu = None;
        let mut dynamic = None;
        if b.dynamic {
            if self.emit_symtab {
                out.align(8);
                let at = out.pos();
                let ent = if wide { 24 } else { 16 };
                out.buf.resize(out.buf.len() + ent, 0);
                for (i, (name, sym)) in self.syms.iter().enumerate() {
                    let (bind, shndx) = match sym.kind {
                        SymKind::Local => (0u8, SHN_ABS),
                        SymKind::Undefined { weak } => (if weak { 2 } else { 1 }, 0),
                        SymKind::Defined { weak } => (if weak { 2 } else { 1 }, SHN_ABS),
                    };
                    let info = (bind << 4) | STT_FUNC;
                    let value = if shndx == 0 { 0 } else { 0x1000 + 16 * i as u64 };
                    if wide {
                        out.u32(*name);
                        out.u8(info);
                        out.u8(0);
                        out.u16(shndx);
                        out.u64(value);
                        out.u64(0);
                    } else {
                        out.u32(*name);
                        out.u32(value as u32);
                        out.u32(0);
                        out.u8(info);
                        out.u8(0);
                        out.u16(shndx);
                    }
                }
                dynsym = Some((at, out.pos() - at));
            }
            let at = out.pos();
            out.buf.extend_from_slice(&self.dynstr.bytes);
            dynstr = Some((at, self.dynstr.bytes.len() as u64));
            if self.emit_symtab && matches!(b.hash, HashStyle::Sysv | HashStyle::Both) {
                out.align(8);
                let at = out.pos();
                for v in self.sysv_table() {
                    out.u32(v);
                }
                sysv = Some((at, out.pos() - at));
            }
            if self.emit_symtab && matches!(b.hash, HashStyle::Gnu | HashStyle::Both) {
                out.align(8);
                let at = out.pos();
                self.write_gnu(&mut out);
                gnu = Some((at, out.pos() - at));
            }
            out.align(8);
            let at = out.pos();
            let entry = |out: &mut Out, tag: u64, val: u64| {
                out.word(tag);
                out.word(val);
            };
            let mut strs = StrTab::new();
            strs.bytes = self.dynstr.bytes.clone();
            for n in &b.needed {
                entry(&mut out, DT_NEEDED, u64::from(strs.add(n)));
            }
            if let Some(s) = &b.soname {
                entry(&mut out, DT_SONAME, u64::from(strs.add(s)));
            }
            if let Some(s) = &b.rpath {
                entry(&mut out, DT_RPATH, u64::from(strs.add(s)));
            }
            if let Some(s) = &b.runpath {
                entry(&mut out, DT_RUNPATH, u64::from(strs.add(s)));
            }
            if let Some((off, _)) = sysv {
                entry(&mut out, DT_HASH, addr(off));
            }
            if let Some((off, _)) = gnu {
                entry(&mut out, DT_GNU_HASH, addr(off));
            }
            let (str_off, str_len) = dynstr.unwrap();
            let wants_strtab = self.emit_symtab || self.dynstr.bytes.len() > 1;
            if wants_strtab {
                entry(&mut out, DT_STRTAB, b.strtab_override.unwrap_or_else(|| addr(str_off)));
            }
            if let Some((off, _)) = dynsym {
                entry(&mut out, DT_SYMTAB, addr(off));
            }
            if wants_strtab {
                entry(&mut out, DT_STRSZ, str_len);
            }
            if dynsym.is_some() {
                entry(&mut out, DT_SYMENT, if wide { 24 } else { 16 });
            }
            entry(&mut out, DT_NULL, 0);
            dynamic = Some((at, out.pos() - at));
        }
        let loaded_end = out.pos();

        let mut shoff = 0u64;
        let mut shnum = 0u16;
        let mut shstrndx = 0u16;
        if b.sections {
            let mut names = StrTab::new();
            let mut headers = vec![SectionHeader {
                name: 0, kind: 0, flags: 0, addr: 0, offset: 0, size: 0, link: 0, info: 0, align: 0, entsize: 0,
            }];
            let mut push = |headers: &mut Vec<SectionHeader>, name: &str, kind: u32, flags: u64, span: (u64, u64), align: u64, entsize: u64| {
                headers.push(SectionHeader {
                    name: names.add(name),
                    kind,
                    flags,
                    addr: if flags & SHF_ALLOC != 0 { addr(span.0) } else { 0 },
                    offset: span.0,
                    size: span.1,
                    link: 0,
                    info: 0,
                    align,
                    entsize,
                });
                headers.len() - 1
            };
            if let Some(span) = interp {
                push(&mut headers, ".interp", SHT_PROGBITS, SHF_ALLOC, span, 1, 0);
            }
            let sym_idx = dynsym.map(|span| push(&mut headers, ".dynsym", SHT_DYNSYM, SHF_ALLOC, span, 8, if wide { 24 } else { 16 }));
            let str_idx = dynstr.map(|span| push(&mut headers, ".dynstr", SHT_STRTAB, SHF_ALLOC, span, 1, 0));
            let hash_idx = sysv.map(|span| push(&mut headers, ".hash", SHT_HASH, SHF_ALLOC, span, 8, 4));
            let gnu_idx = gnu.map(|span| push(&mut headers, ".gnu.hash", SHT_GNU_HASH, SHF_ALLOC, span, 8, 0));
            let dyn_idx = dynamic.map(|span| {
                push(&mut headers, ".dynamic", SHT_DYNAMIC, SHF_ALLOC | SHF_WRITE, span, 8, if wide { 16 } else { 8 })
            });
            if let (Some(i), Some(s)) = (sym_idx, str_idx) {
                headers[i].link = s as u32;
                headers[i].info = self.first_nonlocal;
            }
            for i in [hash_idx, gnu_idx].into_iter().flatten() {
                headers[i].link = sym_idx.unwrap_or(0) as u32;
            }
            if let (Some(i), Some(s)) = (dyn_idx, str_idx) {
                headers[i].link = s as u32;
            }
            let shstr_name = names.add(".shstrtab");
            let at = out.pos();
            out.buf.extend_from_slice(&names.bytes);
            headers.push(SectionHeader {
                name: shstr_name,
                kind: SHT_STRTAB,
                flags: 0,
                addr: 0,
                offset: at,
                size: names.bytes.len() as u64,
                link: 0,
                info: 0,
                align: 1,
                entsize: 0,
            });
            out.align(8);
            shoff = out.pos();
            shnum = headers.len() as u16;
            shstrndx = shnum - 1;
            for h in headers {
                out.u32(h.name);
                out.u32(h.kind);
                out.word(h.flags);
                out.word(h.addr);
                out.word(h.offset);
                out.word(h.size);
                out.u32(h.link);
                out.u32(h.info);
                out.word(h.align);
                out.word(h.entsize);
            }
        }
        if out.buf.len() < b.pad_to {
            out.buf.resize(b.pad_to, 0);
        }

        // ELF header and program headers.
        let body = std::mem::take(&mut out.buf);
        out.buf.extend_from_slice(&ELF_MAGIC);
        out.u8(if wide { ELFCLASS64 } else { ELFCLASS32 });
        out.u8(if out.big { ELFDATA2MSB } else { ELFDATA2LSB });
        out.u8(1);
        out.buf.resize(16, 0);
        out.u16(b.object_type.code());
        out.u16(match (wide, out.big) {
            (true, false) => 62,
            (false, false) => 3,
            (false, true) => 20,
            (true, true) => 21,
        });
        out.u32(1);
        out.word(0);
        out.word(ehdr_len);
        out.word(shoff);
        out.u32(0);
        out.u16(ehdr_len as u16);
        out.u16(phent as u16);
        out.u16(phnum as u16);
        out.u16(if b.sections { if wide { 64 } else { 40 } } else { 0 });
        out.u16(shnum);
        out.u16(shstrndx);
        let phdr = |out: &mut Out, kind: u32, flags: u32, off: u64, vaddr: u64, size: u64, align: u64| {
            if wide {
                out.u32(kind);
                out.u32(flags);
                out.u64(off);
                out.u64(vaddr);
                out.u64(vaddr);
                out.u64(size);
                out.u64(size);
                out.u64(align);
            } else {
                out.u32(kind);
                out.u32(off as u32);
                out.u32(vaddr as u32);
                out.u32(vaddr as u32);
                out.u32(size as u32);
                out.u32(size as u32);
                out.u32(flags);
                out.u32(align as u32);
            }
        };
        if let Some((off, len)) = interp {
            phdr(&mut out, PT_INTERP, 4, off, addr(off), len, 1);
        }
        if b.split {
            phdr(&mut out, PT_LOAD, 5, 0, base, split_at, 0x1000);
            phdr(&mut out, PT_LOAD, 6, split_at, addr(split_at), loaded_end - split_at, 0x1000);
        } else {
            phdr(&mut out, PT_LOAD, 5, 0, base, loaded_end, 0x1000);
        }
        if let Some((off, len)) = dynamic {
            phdr(&mut out, PT_DYNAMIC, 6, off, addr(off), len, 8);
        }
        let header_len = out.buf.len();
        debug_assert_eq!(header_len as u64, ehdr_len + phnum * phent);
        let mut image = out.buf;
        image.extend_from_slice(&body[header_len..]);
        image
    }
}
