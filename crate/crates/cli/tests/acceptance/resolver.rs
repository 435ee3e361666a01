use std::path::Path;
use std::process::Command;

use depex_core::elf::{parse_elf, ByteOrder, ElfBuilder, ElfSummary, ObjectType, WordSize};
use depex_core::fixture::TreeBuilder;
use depex_core::resolve::{Origin, Resolver, SearchConfig, Status};

use crate::Verdict;

struct Case {
    name: &'static str,
    needed: &'static str,
    dependent: &'static str,
    rpath: Option<&'static str>,
    runpath: Option<&'static str>,
    env: &'static [&'static str],
    /// `None` means Missing.
    expect: Option<(&'static str, Origin)>,
}

fn summary(case: &Case) -> ElfSummary {
    let mut s = ElfSummary::empty(WordSize::Bits64, ByteOrder::Little, ObjectType::Executable);
    s.rpath = case.rpath.map(str::to_owned);
    s.runpath = case.runpath.map(str::to_owned);
    s.needed = vec![case.needed.to_owned()];
    s
}

fn lib(soname: &str) -> ElfBuilder {
    ElfBuilder::library(soname)
}

/// One sysroot holding every directory the cases below probe.
fn build_sysroot(root: &Path) {
    let t = TreeBuilder::new(root);
    t.file("/etc/ld.so.conf", "include /etc/ld.so.conf.d/*.conf\n").unwrap();
    t.file("/etc/ld.so.conf.d/10-first.conf", "/opt/conf1/lib\ninclude /etc/ld.so.extra/*.conf\n").unwrap();
    t.file("/etc/ld.so.extra/nested.conf", "/opt/conf2/lib\n").unwrap();
    for (path, name) in [
        ("/opt/r/lib/librp.so", "librp.so"),
        ("/opt/ru/lib/librun.so", "librun.so"),
        ("/opt/both-r/libboth.so", "libboth.so"),
        ("/opt/both-ru/libboth.so", "libboth.so"),
        ("/opt/only-r/libonlyr.so", "libonlyr.so"),
        ("/opt/app/lib/libappx.so", "libappx.so"),
        ("/opt/env/libenv.so", "libenv.so"),
        ("/opt/env/librp.so", "librp.so"),
        ("/opt/env/librun.so", "librun.so"),
        ("/opt/conf1/lib/libc1.so", "libc1.so"),
        ("/opt/conf2/lib/libc2.so", "libc2.so"),
        ("/opt/conf2/lib/libdef.so", "libdef.so"),
        ("/usr/lib/libdef.so", "libdef.so"),
        ("/usr/lib/libfallback.so", "libfallback.so"),
        ("/opt/abs/libabs.so", "libabs.so"),
        ("/opt/app/bin/plugins/librel.so", "librel.so"),
        ("/usr/lib/real/libreal.so.1.2", "libreal.so.1"),
        ("/lib/libloop.so", "libloop.so"),
    ] {
        t.elf(path, lib(name)).unwrap();
    }
    // Absolute targets are re-rooted inside the sysroot, never the host.
    t.symlink("/usr/lib/libreal.so.1", "/usr/lib/real/libreal.so.1.2").unwrap();
    // Host-absolute looking link that only exists inside the sysroot.
    t.symlink("/usr/lib/libhostonly.so", "/nonexistent-on-host/libhostonly.so").unwrap();
    t.elf("/nonexistent-on-host/libhostonly.so", lib("libhostonly.so")).unwrap();
    // A loop in an earlier directory does not hide a later match.
    t.symlink("/usr/lib/libloop.so", "/usr/lib/libloop2.so").unwrap();
    t.symlink("/usr/lib/libloop2.so", "/usr/lib/libloop.so").unwrap();
    t.symlink("/usr/lib/libonlyloop.so", "libonlyloop.so").unwrap();
    // Directory link for $ORIGIN through a symlinked prefix.
    t.symlink("/app", "/opt/app").unwrap();
}

const CASES: &[Case] = &[
    Case { name: "rpath only", needed: "librp.so", dependent: "/usr/bin/x", rpath: Some("/opt/r/lib"), runpath: None, env: &[], expect: Some(("/opt/r/lib/librp.so", Origin::Rpath)) },
    Case { name: "runpath only", needed: "librun.so", dependent: "/usr/bin/x", rpath: None, runpath: Some("/opt/ru/lib"), env: &[], expect: Some(("/opt/ru/lib/librun.so", Origin::Runpath)) },
    Case { name: "both set, rpath ignored", needed: "libboth.so", dependent: "/usr/bin/x", rpath: Some("/opt/both-r"), runpath: Some("/opt/both-ru"), env: &[], expect: Some(("/opt/both-ru/libboth.so", Origin::Runpath)) },
    Case { name: "both set, rpath-only copy unreachable", needed: "libonlyr.so", dependent: "/usr/bin/x", rpath: Some("/opt/only-r"), runpath: Some("/opt/ru/lib"), env: &[], expect: None },
    Case { name: "$ORIGIN", needed: "libappx.so", dependent: "/opt/app/bin/tool", rpath: None, runpath: Some("$ORIGIN/../lib"), env: &[], expect: Some(("/opt/app/lib/libappx.so", Origin::Runpath)) },
    Case { name: "${ORIGIN} in rpath", needed: "libappx.so", dependent: "/opt/app/bin/tool", rpath: Some("${ORIGIN}/../lib"), runpath: None, env: &[], expect: Some(("/opt/app/lib/libappx.so", Origin::Rpath)) },
    Case { name: "$ORIGIN through symlinked dir", needed: "libappx.so", dependent: "/app/bin/tool", rpath: None, runpath: Some("$ORIGIN/../lib"), env: &[], expect: Some(("/opt/app/lib/libappx.so", Origin::Runpath)) },
    Case { name: "env path", needed: "libenv.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &["/opt/env"], expect: Some(("/opt/env/libenv.so", Origin::EnvPath)) },
    Case { name: "rpath before env", needed: "librp.so", dependent: "/usr/bin/x", rpath: Some("/opt/r/lib"), runpath: None, env: &["/opt/env"], expect: Some(("/opt/r/lib/librp.so", Origin::Rpath)) },
    Case { name: "env before runpath", needed: "librun.so", dependent: "/usr/bin/x", rpath: None, runpath: Some("/opt/ru/lib"), env: &["/opt/env"], expect: Some(("/opt/env/librun.so", Origin::EnvPath)) },
    Case { name: "ld.so.conf include", needed: "libc1.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: Some(("/opt/conf1/lib/libc1.so", Origin::LdsoConf)) },
    Case { name: "ld.so.conf nested include", needed: "libc2.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: Some(("/opt/conf2/lib/libc2.so", Origin::LdsoConf)) },
    Case { name: "ld.so.conf before defaults", needed: "libdef.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: Some(("/opt/conf2/lib/libdef.so", Origin::LdsoConf)) },
    Case { name: "default dir fallback", needed: "libfallback.so", dependent: "/usr/bin/x", rpath: Some("/opt/r/lib"), runpath: None, env: &[], expect: Some(("/usr/lib/libfallback.so", Origin::DefaultDir)) },
    Case { name: "absolute needed name", needed: "/opt/abs/libabs.so", dependent: "/usr/bin/x", rpath: None, runpath: Some("/opt/ru/lib"), env: &[], expect: Some(("/opt/abs/libabs.so", Origin::Direct)) },
    Case { name: "relative slash name", needed: "plugins/librel.so", dependent: "/opt/app/bin/tool", rpath: None, runpath: None, env: &[], expect: Some(("/opt/app/bin/plugins/librel.so", Origin::Direct)) },
    Case { name: "slash name never searched", needed: "sub/libfallback.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: None },
    Case { name: "absolute symlink re-rooted", needed: "libreal.so.1", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: Some(("/usr/lib/real/libreal.so.1.2", Origin::DefaultDir)) },
    Case { name: "link target only inside sysroot", needed: "libhostonly.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: Some(("/nonexistent-on-host/libhostonly.so", Origin::DefaultDir)) },
    Case { name: "symlink loop skipped", needed: "libloop.so", dependent: "/usr/bin/x", rpath: Some("/usr/lib"), runpath: None, env: &[], expect: Some(("/lib/libloop.so", Origin::DefaultDir)) },
    Case { name: "symlink loop only", needed: "libonlyloop.so", dependent: "/usr/bin/x", rpath: None, runpath: None, env: &[], expect: None },
    Case { name: "missing everywhere", needed: "libnowhere.so", dependent: "/usr/bin/x", rpath: Some("/opt/r/lib"), runpath: None, env: &["/opt/env"], expect: None },
];

fn live_loader_check() -> String {
    let have = |tool: &str, arg: &str| Command::new(tool).arg(arg).output().is_ok_and(|o| o.status.success());
    if !have("gcc", "--version") || !have("ldd", "--version") {
        return "live loader: unavailable".into();
    }
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::canonicalize(dir.path()).unwrap();
    std::fs::create_dir_all(base.join("lib")).unwrap();
    std::fs::create_dir_all(base.join("bin")).unwrap();
    std::fs::write(base.join("probe.c"), "int probe_value(void) { return 7; }\n").unwrap();
    std::fs::write(base.join("main.c"), "int probe_value(void);\nint main(void) { return probe_value() - 7; }\n").unwrap();
    let lib = base.join("lib/libliveprobe.so");
    let exe = base.join("bin/probe");
    let built = Command::new("gcc")
        .args(["-shared", "-fPIC", "-Wl,-soname,libliveprobe.so", "-o"])
        .arg(&lib)
        .arg(base.join("probe.c"))
        .status()
        .is_ok_and(|s| s.success())
        && Command::new("gcc")
            .arg("-o")
            .arg(&exe)
            .arg(base.join("main.c"))
            .arg(format!("-L{}", base.join("lib").display()))
            .args(["-lliveprobe", "-Wl,--enable-new-dtags,-rpath,$ORIGIN/../lib"])
            .status()
            .is_ok_and(|s| s.success());
    if !built {
        return "live loader: gcc build failed".into();
    }
    let Ok(out) = Command::new("ldd").arg(&exe).env_remove("LD_LIBRARY_PATH").output() else {
        return "live loader: ldd failed".into();
    };
    let text = String::from_utf8_lossy(&out.stdout);
    let summary = parse_elf(&std::fs::read(&exe).unwrap()).unwrap();
    let resolver = Resolver::new(SearchConfig::new("/").unwrap());
    let exe_path = exe.to_str().unwrap();
    let (mut agree, mut total) = (0, 0);
    for needed in &summary.needed {
        let Some(line) = text.lines().find(|l| l.trim_start().starts_with(&format!("{needed} =>"))) else { continue };
        let Some(loader_path) = line.split("=>").nth(1).and_then(|r| r.split_whitespace().next()) else { continue };
        let ours = resolver.resolve(needed, &summary, exe_path);
        let loader_canonical = std::fs::canonicalize(loader_path).map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        total += 1;
        if ours.path() == Some(loader_canonical.as_str()) {
            agree += 1;
        }
    }
    format!("live loader: {agree}/{total} needed names agree with ldd (informative)")
}

pub fn conformance() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    build_sysroot(dir.path());
    let base = SearchConfig::new(dir.path()).unwrap().with_multiarch(false);
    let mut failures = Vec::new();
    for case in CASES {
        let config = base.clone().with_env_library_path(case.env.iter().map(|s| s.to_string()).collect());
        let resolver = Resolver::new(config);
        let got = resolver.resolve(case.needed, &summary(case), case.dependent);
        let want = match case.expect {
            Some((path, origin)) => Status::Resolved { path: path.to_owned(), origin },
            None => Status::Missing,
        };
        if got.status != want {
            failures.push(format!("{}: got {:?}, want {:?}", case.name, got.status, want));
        }
    }
    let live = live_loader_check();
    let detail = format!("{}/{} table rows agree; {live}", CASES.len() - failures.len(), CASES.len());
    if failures.is_empty() {
        Verdict::pass(detail)
    } else {
        Verdict::fail(format!("{detail}; {}", failures.join("; ")))
    }
}
