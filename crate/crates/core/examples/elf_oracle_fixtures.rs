//! Writes the parser oracle fixture set into the directory given as the only
//! argument: every word size, byte order and object type combination, plus
//! layout variants.

use std::path::Path;

use depex_core::elf::{ByteOrder, ElfBuilder, HashStyle, ObjectType, WordSize};

fn base(word: WordSize, order: ByteOrder, kind: &str) -> ElfBuilder {
    let b = ElfBuilder::new(word, order);
    match kind {
        "exec" => b.object_type(ObjectType::Executable).interpreter("/lib/ld-linux.so.2"),
        "pie" => b.interpreter("/lib64/ld-linux-x86-64.so.2"),
        _ => b.soname(&format!("lib{kind}.so.1")),
    }
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).expect("usage: elf_oracle_fixtures <dir>");
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, b: ElfBuilder| std::fs::write(dir.join(format!("{name}.elf")), b.build());

    for (word, w) in [(WordSize::Bits32, "32"), (WordSize::Bits64, "64")] {
        for (order, o) in [(ByteOrder::Little, "le"), (ByteOrder::Big, "be")] {
            for kind in ["exec", "pie", "dyn"] {
                let b = base(word, order, kind)
                    .needed_all(["libc.so.6", "libm.so.6"])
                    .import("printf")
                    .import("cos")
                    .import_weak("__gmon_start__")
                    .export("entry_point")
                    .export_weak("weak_hook")
                    .local("local_helper");
                write(&format!("{w}{o}-{kind}"), b)?;
            }
        }
    }

    let lib = |w, o| ElfBuilder::new(w, o).soname("libvariant.so.2").needed("libc.so.6").import("malloc").export("variant_fn");
    write("64le-sysv-nosections", lib(WordSize::Bits64, ByteOrder::Little).hash_style(HashStyle::Sysv).section_headers(false))?;
    write("64be-gnu-nosections", lib(WordSize::Bits64, ByteOrder::Big).hash_style(HashStyle::Gnu).section_headers(false))?;
    write("32le-both-split", lib(WordSize::Bits32, ByteOrder::Little).hash_style(HashStyle::Both).split_segments(true))?;
    write("32be-sysv-split", lib(WordSize::Bits32, ByteOrder::Big).hash_style(HashStyle::Sysv).split_segments(true))?;
    write("64le-nohash-sections", lib(WordSize::Bits64, ByteOrder::Little).hash_style(HashStyle::None))?;
    write(
        "64le-rpath-runpath",
        ElfBuilder::executable().needed_all(["libapp.so", "libc.so.6"]).rpath("/opt/old:$ORIGIN/../lib").runpath("$ORIGIN/../lib:/opt/app/lib"),
    )?;
    write("32be-rpath-only", ElfBuilder::new(WordSize::Bits32, ByteOrder::Big).object_type(ObjectType::Executable).needed("libx.so").rpath("/usr/local/lib"))?;
    write("64le-static-like", ElfBuilder::new(WordSize::Bits64, ByteOrder::Little).object_type(ObjectType::Executable).no_dynamic())?;
    write("64le-no-deps", ElfBuilder::library("libleaf.so.0").export("leaf"))?;
    write(
        "64le-many-needed",
        ElfBuilder::executable().needed_all((0..40).map(|i| format!("libdep{i}.so")).collect::<Vec<_>>().iter().map(String::as_str)),
    )?;
    Ok(())
}
