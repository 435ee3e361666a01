use std::collections::BTreeSet;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use depex_core::elf::{classify_kind, parse_elf, ByteOrder, ElfBuilder, ElfError, HashStyle, ObjectType, WordSize};

use crate::common::crate_dir;
use crate::Verdict;

fn fixture_dir() -> std::path::PathBuf {
    crate_dir().join("tests/fixtures/elf")
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_owned()).collect()
}

fn opt(v: &Value) -> Option<String> {
    v.as_str().map(str::to_owned)
}

/// Differences between the parser and one oracle record.
fn compare(name: &str, bytes: &[u8], want: &Value) -> Vec<String> {
    let s = match parse_elf(bytes) {
        Ok(s) => s,
        Err(e) => return vec![format!("{name}: parse failed: {e}")],
    };
    let mut diffs = Vec::new();
    let mut field = |label: &str, ok: bool, got: String| {
        if !ok {
            diffs.push(format!("{name}.{label}: got {got}, oracle {}", want[label]));
        }
    };
    let word = if s.word_size == WordSize::Bits64 { 64 } else { 32 };
    field("word_size", want["word_size"] == word, word.to_string());
    let order = if s.byte_order == ByteOrder::Little { "little" } else { "big" };
    field("byte_order", want["byte_order"] == order, order.into());
    field("has_interpreter", want["has_interpreter"] == s.has_interpreter, s.has_interpreter.to_string());
    let kind = classify_kind(&s, name).as_str();
    field("kind", want["kind"] == kind, kind.into());
    field("needed", strings(&want["needed"]) == s.needed, format!("{:?}", s.needed));
    field("soname", opt(&want["soname"]) == s.soname, format!("{:?}", s.soname));
    field("rpath", opt(&want["rpath"]) == s.rpath, format!("{:?}", s.rpath));
    field("runpath", opt(&want["runpath"]) == s.runpath, format!("{:?}", s.runpath));
    let set = |v: &Value| strings(v).into_iter().collect::<BTreeSet<_>>();
    field("undefined_symbols", set(&want["undefined_symbols"]) == s.undefined_symbols, format!("{:?}", s.undefined_symbols));
    field("weak_undefined", set(&want["weak_undefined"]) == s.weak_undefined, format!("{:?}", s.weak_undefined));
    field("exported_symbols", set(&want["exported_symbols"]) == s.exported_symbols, format!("{:?}", s.exported_symbols));
    diffs
}

/// Regenerates the oracle with the host readelf into a scratch copy of the
/// fixtures and reports whether it still matches the frozen record.
fn live_readelf(frozen: &Value) -> String {
    let have = |tool: &str| Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success());
    if !have("readelf") || !have("python3") {
        return "live readelf: unavailable".into();
    }
    let scratch = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_name().to_string_lossy().ends_with(".elf") {
            std::fs::copy(entry.path(), scratch.path().join(entry.file_name())).unwrap();
        }
    }
    let script = crate_dir().join("../../scripts/readelf_oracle.py");
    let o = Command::new("python3").arg(script).arg("--no-build").arg(scratch.path()).output().unwrap();
    if !o.status.success() {
        return format!("live readelf: script failed: {}", String::from_utf8_lossy(&o.stderr).trim());
    }
    let live: Value = serde_json::from_str(&std::fs::read_to_string(scratch.path().join("expected.json")).unwrap()).unwrap();
    if &live == frozen {
        "live readelf: agrees with frozen oracle".into()
    } else {
        "live readelf: DIFFERS from frozen oracle".into()
    }
}

pub fn oracle_equivalence() -> Verdict {
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap()).unwrap();
    let records = expected.as_object().unwrap();
    let started = Instant::now();
    let mut diffs = Vec::new();
    let mut cells = BTreeSet::new();
    for (name, want) in records {
        let bytes = std::fs::read(fixture_dir().join(name)).unwrap();
        diffs.extend(compare(name, &bytes, want));
        let ty = want["type"].as_str().unwrap();
        let shape = match (ty, want["has_interpreter"].as_bool().unwrap()) {
            ("EXEC", _) => "exec",
            ("DYN", true) => "dyn+interp",
            ("DYN", false) => "dyn",
            _ => "other",
        };
        cells.insert((want["word_size"].to_string(), want["byte_order"].as_str().unwrap().to_owned(), shape));
    }
    let elapsed = started.elapsed();
    let live = live_readelf(&expected);
    let detail = format!(
        "{} fixtures, {} of 12 width/order/type cells, {} mismatches, parse+compare {:.3}s; {live}",
        records.len(),
        cells.iter().filter(|c| c.2 != "other").count(),
        diffs.len(),
        elapsed.as_secs_f64()
    );
    if !diffs.is_empty() {
        return Verdict::fail(format!("{detail}; first: {}", diffs[0]));
    }
    let full_matrix = cells.iter().filter(|c| c.2 != "other").count() == 12;
    Verdict::check(records.len() >= 20 && full_matrix && elapsed < Duration::from_secs(5) && !live.contains("DIFFERS"), detail)
}

fn seeds() -> Vec<Vec<u8>> {
    let mut v: Vec<Vec<u8>> = Vec::new();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "elf") {
            v.push(std::fs::read(&p).unwrap());
        }
    }
    for word in [WordSize::Bits32, WordSize::Bits64] {
        for order in [ByteOrder::Little, ByteOrder::Big] {
            for hash in [HashStyle::Sysv, HashStyle::Gnu, HashStyle::Both, HashStyle::None] {
                for sections in [true, false] {
                    let b = ElfBuilder::new(word, order)
                        .soname("libseed.so")
                        .needed_all(["a.so", "b.so"])
                        .rpath("$ORIGIN")
                        .import("f")
                        .import_weak("g")
                        .export("h")
                        .hash_style(hash)
                        .section_headers(sections)
                        .split_segments(!sections);
                    v.push(b.build());
                }
            }
        }
    }
    v.push(ElfBuilder::new(WordSize::Bits64, ByteOrder::Little).object_type(ObjectType::Executable).no_dynamic().build());
    v
}

fn mutate(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    let mut b = seed.to_vec();
    let rounds = rng.gen_range(1..=4);
    for _ in 0..rounds {
        if b.is_empty() {
            b.push(rng.gen());
        }
        // Most structure sits in the first few hundred bytes.
        let hot = b.len().min(if rng.gen_bool(0.7) { 512 } else { b.len() });
        match rng.gen_range(0..7) {
            0 => {
                let i = rng.gen_range(0..hot);
                b[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let i = rng.gen_range(0..hot);
                b[i] = rng.gen();
            }
            2 => {
                let n = rng.gen_range(0..=b.len());
                b.truncate(n);
            }
            3 => {
                let width = if rng.gen_bool(0.5) { 4 } else { 8 };
                if b.len() >= width {
                    let i = rng.gen_range(0..=hot.saturating_sub(width).min(b.len() - width));
                    let value: u64 = match rng.gen_range(0..4) {
                        0 => 0,
                        1 => u64::MAX,
                        2 => rng.gen_range(0..b.len() as u64 * 2),
                        _ => rng.gen(),
                    };
                    b[i..i + width].copy_from_slice(&value.to_le_bytes()[..width]);
                }
            }
            4 => {
                let i = rng.gen_range(0..=b.len());
                let junk: Vec<u8> = (0..rng.gen_range(1..64)).map(|_| rng.gen()).collect();
                b.splice(i..i, junk);
            }
            5 => {
                let i = rng.gen_range(0..hot);
                let n = rng.gen_range(1..32).min(b.len() - i);
                b.drain(i..i + n);
            }
            _ => {
                // Copy one region over another, which keeps plausible values.
                let n = rng.gen_range(1..16).min(b.len());
                let from = rng.gen_range(0..=b.len() - n);
                let to = rng.gen_range(0..=b.len() - n);
                let chunk = b[from..from + n].to_vec();
                b[to..to + n].copy_from_slice(&chunk);
            }
        }
    }
    b
}

pub fn mutation_fuzz() -> Verdict {
    let seeds = seeds();
    let mut rng = StdRng::seed_from_u64(0x05ee_de1f);
    let (mut ok, mut not_elf, mut truncated, mut malformed, mut crashes, mut hangs) = (0, 0, 0, 0, 0, 0);
    let mut first_crash = None;
    let started = Instant::now();
    for case in 0..10_000 {
        let seed = &seeds[rng.gen_range(0..seeds.len())];
        let input = mutate(&mut rng, seed);
        let t = Instant::now();
        let result = std::panic::catch_unwind(|| parse_elf(&input));
        if t.elapsed() > Duration::from_secs(1) {
            hangs += 1;
        }
        match result {
            Ok(Ok(summary)) => {
                ok += 1;
                let _ = classify_kind(&summary, "/fuzz");
            }
            Ok(Err(ElfError::NotElf)) => not_elf += 1,
            Ok(Err(ElfError::Truncated { .. })) => truncated += 1,
            Ok(Err(ElfError::Malformed(_))) => malformed += 1,
            Err(_) => {
                crashes += 1;
                first_crash.get_or_insert(case);
            }
        }
    }
    let detail = format!(
        "10000 cases in {:.2}s: {ok} parsed, {not_elf} NotElf, {truncated} Truncated, {malformed} Malformed, {crashes} crashes, {hangs} hangs",
        started.elapsed().as_secs_f64()
    );
    match first_crash {
        Some(case) => Verdict::fail(format!("{detail}; first crash at case {case}")),
        None => Verdict::check(hangs == 0 && ok + not_elf + truncated + malformed == 10_000, detail),
    }
}
