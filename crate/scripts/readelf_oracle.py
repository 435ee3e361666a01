#!/usr/bin/env python3
"""Regenerate the ELF parser oracle fixtures and their expected values.

Writes synthetic fixtures with the `elf_oracle_fixtures` example, compiles a
few real objects with gcc when it is available, then records what GNU
readelf reports for each file in expected.json.

Usage: scripts/readelf_oracle.py [--no-build] [DIR]
"""

import json
import os
import re
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_DIR = os.path.join(ROOT, "crates", "cli", "tests", "fixtures", "elf")

GCC_SOURCES = {
    "libgcc-demo.c": "int demo_value = 3;\nint demo_fn(int x) { return x + demo_value; }\n"
    "extern int weak_probe(void) __attribute__((weak));\n"
    "int demo_probe(void) { return weak_probe ? weak_probe() : 0; }\n",
    "main.c": "#include <stdio.h>\n#include <math.h>\nint demo_fn(int);\n"
    "int main(int c, char **v) { printf(\"%d %f\\n\", demo_fn(c), cos((double)c)); return 0; }\n",
}


def build_gcc(dest):
    if shutil.which("gcc") is None:
        print("gcc not found, skipping toolchain fixtures", file=sys.stderr)
        return
    with tempfile.TemporaryDirectory() as tmp:
        for name, text in GCC_SOURCES.items():
            with open(os.path.join(tmp, name), "w") as f:
                f.write(text)
        lib = os.path.join(dest, "gcc-lib.elf")
        run(["gcc", "-shared", "-fPIC", "-O1", "-Wl,-soname,libgcc-demo.so.1",
             "-Wl,--enable-new-dtags,-rpath,$ORIGIN/../lib", "-o", lib, os.path.join(tmp, "libgcc-demo.c")])
        shutil.copy(lib, os.path.join(tmp, "libgcc-demo.so"))
        common = [os.path.join(tmp, "main.c"), "-L", tmp, "-lgcc-demo", "-lm"]
        run(["gcc", "-O1", "-pie", "-fPIE", "-o", os.path.join(dest, "gcc-pie.elf")] + common)
        run(["gcc", "-O1", "-no-pie", "-fno-PIE", "-Wl,--disable-new-dtags,-rpath,/opt/demo/lib",
             "-o", os.path.join(dest, "gcc-nopie.elf")] + common)


def run(cmd, **kw):
    return subprocess.run(cmd, check=True, capture_output=True, text=True, **kw).stdout


DYN_RE = re.compile(r"\((NEEDED|SONAME|RPATH|RUNPATH)\)\s+[^\[]*\[(.*)\]\s*$")
SYM_RE = re.compile(r"^\s*(\d+):\s+[0-9a-fA-F]+\s+\S+\s+(\S+)\s+(\S+)\s+\S+(?:\s+\[[^\]]*\])?\s+(\S+)\s*(.*)$")


def readelf(path):
    header = run(["readelf", "-W", "-h", path])
    etype = re.search(r"^\s*Type:\s+(\S+)", header, re.M).group(1)
    clazz = re.search(r"^\s*Class:\s+(\S+)", header, re.M).group(1)
    data = re.search(r"^\s*Data:\s+.*(little|big) endian", header, re.M).group(1)
    segments = run(["readelf", "-W", "-l", path])
    has_interp = "Requesting program interpreter" in segments
    dynamic = run(["readelf", "-W", "-D", "-d", path])
    needed, soname, rpath, runpath = [], None, None, None
    for line in dynamic.splitlines():
        m = DYN_RE.search(line)
        if not m:
            continue
        tag, value = m.groups()
        if tag == "NEEDED":
            needed.append(value)
        elif tag == "SONAME":
            soname = value
        elif tag == "RPATH":
            rpath = value
        else:
            runpath = value
    undefined, weak, exported = set(), set(), set()
    # The section view needs section headers and the dynamic view needs a
    # hash table to size the symbol table, so use whichever the file allows.
    has_sections = "There are no sections" not in run(["readelf", "-W", "-S", path])
    if "(SYMTAB)" not in dynamic:
        syms = ""
    elif has_sections:
        syms = run(["readelf", "-W", "--dyn-syms", path])
    else:
        syms = run(["readelf", "-W", "-D", "-s", path])
    for line in syms.splitlines():
        m = SYM_RE.match(line)
        if not m:
            continue
        num, typ, bind, ndx, name = m.groups()
        name = name.split("@")[0].split(" ")[0]
        if num == "0" or bind == "LOCAL" or typ in ("SECTION", "FILE") or not name:
            continue
        if ndx == "UND":
            undefined.add(name)
            if bind == "WEAK":
                weak.add(name)
        elif bind in ("GLOBAL", "WEAK", "UNIQUE"):
            exported.add(name)
    undefined -= exported
    weak &= undefined
    if etype.startswith("EXEC") or (etype.startswith("DYN") and has_interp):
        kind = "executable"
    elif etype.startswith("DYN"):
        kind = "library"
    else:
        kind = "other"
    return {
        "word_size": 64 if clazz == "ELF64" else 32,
        "byte_order": data,
        "type": etype,
        "has_interpreter": has_interp,
        "kind": kind,
        "needed": needed,
        "soname": soname,
        "rpath": rpath,
        "runpath": runpath,
        "undefined_symbols": sorted(undefined),
        "weak_undefined": sorted(weak),
        "exported_symbols": sorted(exported),
    }


def main(argv):
    build = "--no-build" not in argv
    args = [a for a in argv if not a.startswith("--")]
    dest = os.path.abspath(args[0]) if args else DEFAULT_DIR
    os.makedirs(dest, exist_ok=True)
    if build:
        run(["cargo", "run", "-q", "-p", "depex-core", "--example", "elf_oracle_fixtures", dest], cwd=ROOT)
        build_gcc(dest)
    expected = {}
    for name in sorted(os.listdir(dest)):
        if name.endswith(".elf"):
            expected[name] = readelf(os.path.join(dest, name))
    with open(os.path.join(dest, "expected.json"), "w") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"{len(expected)} fixtures in {dest}")


if __name__ == "__main__":
    main(sys.argv[1:])
