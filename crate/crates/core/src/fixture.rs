//! Synthetic sysroot construction for tests, benchmarks and demos.

use std::fs;
use std::io;
use std::os::unix::fs::symlink;
use std::path::{Path, PathBuf};

use crate::elf::ElfBuilder;

/// Writes files into a directory treated as a sysroot.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    root: PathBuf,
}

impl TreeBuilder {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        TreeBuilder { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn host(&self, inner: &str) -> PathBuf {
        self.root.join(inner.trim_start_matches('/'))
    }

    pub fn file(&self, inner: &str, bytes: impl AsRef<[u8]>) -> io::Result<&Self> {
        let host = self.host(inner);
        if let Some(parent) = host.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(host, bytes)?;
        Ok(self)
    }

    pub fn elf(&self, inner: &str, builder: ElfBuilder) -> io::Result<&Self> {
        self.file(inner, builder.build())
    }

    pub fn dir(&self, inner: &str) -> io::Result<&Self> {
        fs::create_dir_all(self.host(inner))?;
        Ok(self)
    }

    /// Creates `inner` as a symlink with the verbatim `target`.
    pub fn symlink(&self, inner: &str, target: &str) -> io::Result<&Self> {
        let host = self.host(inner);
        if let Some(parent) = host.parent() {
            fs::create_dir_all(parent)?;
        }
        symlink(target, host)?;
        Ok(self)
    }

    pub fn hard_link(&self, existing: &str, inner: &str) -> io::Result<&Self> {
        let host = self.host(inner);
        if let Some(parent) = host.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::hard_link(self.host(existing), host)?;
        Ok(self)
    }

    pub fn remove(&self, inner: &str) -> io::Result<&Self> {
        let host = self.host(inner);
        if fs::symlink_metadata(&host)?.is_dir() {
            fs::remove_dir_all(host)?;
        } else {
            fs::remove_file(host)?;
        }
        Ok(self)
    }
}

/// The twelve-file reference sysroot: three executables, seven libraries,
/// two ld.so.conf files, one unresolvable dependency and `/bin` as a
/// symlink to `/usr/bin`.
pub fn reference_sysroot(root: impl Into<PathBuf>) -> io::Result<TreeBuilder> {
    let t = TreeBuilder::new(root);
    t.file("/etc/ld.so.conf", "include /etc/ld.so.conf.d/*.conf\n")?
        .file("/etc/ld.so.conf.d/app.conf", "# vendor libraries\n/opt/app/lib\n")?
        .symlink("/bin", "/usr/bin")?
        .elf("/usr/bin/sh", ElfBuilder::executable().needed("libc.so.6").import("write"))?
        .elf(
            "/usr/bin/tool",
            ElfBuilder::executable().needed_all(["libz.so.1", "libc.so.6", "libghost.so.9"]).import("inflate").import("printf"),
        )?
        .elf(
            "/opt/app/bin/app",
            ElfBuilder::executable()
                .needed_all(["libapp.so", "libgui.so.2", "libc.so.6"])
                .runpath("$ORIGIN/../lib")
                .import("app_init")
                .import("gui_draw")
                .import("malloc"),
        )?
        .elf("/usr/lib/libc.so.6", ElfBuilder::library("libc.so.6").export("write").export("printf").export("malloc").export("free"))?
        .elf("/usr/lib/libm.so.6", ElfBuilder::library("libm.so.6").needed("libc.so.6").export("sin").export("cos"))?
        .elf("/usr/lib/libz.so.1", ElfBuilder::library("libz.so.1").needed("libc.so.6").export("inflate").export("deflate"))?
        .elf(
            "/usr/lib/libgui.so.2",
            ElfBuilder::library("libgui.so.2").needed_all(["libm.so.6", "libc.so.6"]).import("sin").export("gui_draw"),
        )?
        .elf(
            "/opt/app/lib/libapp.so",
            ElfBuilder::library("libapp.so").needed_all(["libutil.so.1", "libc.so.6"]).import("util_fmt").export("app_init"),
        )?
        .elf("/opt/app/lib/libutil.so.1", ElfBuilder::library("libutil.so.1").needed("libc.so.6").export("util_fmt"))?
        .elf("/usr/lib/libunused.so.3", ElfBuilder::library("libunused.so.3").needed("libc.so.6").export("nobody_calls"))?;
    Ok(t)
}
