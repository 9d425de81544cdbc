"""Checkpoint-to-container conversion tool.

Reads a numpy .npz checkpoint archive, renames every tensor through an
ordered list of regex mapping rules, validates names and shapes against the
embedding model's published tensor table (the `biomoe audit --format csv`
output), and writes a TBME weight container plus a conversion report.

The tool talks to the model package only through its two external contracts:
the container byte format and the CLI audit table. Tensors are never
reordered or transposed implicitly; a shape that disagrees with the table is
a fatal error naming the offender, and any layout change must be done by an
explicit upstream rule before import.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import struct
import subprocess
import sys
import tempfile
import zlib

import numpy as np

__version__ = "0.1.0"

# container constants per the published format
MAGIC = b"TBME"
VERSION = 1
DTYPE_F32 = 0


class ConvertError(ValueError):
    pass


# --------------------------------------------------------------------------
# container writing (independent implementation of the byte format)

def container_bytes(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        if not nb or len(nb) > 0xFFFF:
            raise ConvertError(f"bad tensor name '{name}'")
        a = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", DTYPE_F32, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def write_container(path: str, tensors: dict) -> None:
    data = container_bytes(tensors)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# expected-tensor table (audit CSV contract: kind,name,shape,params,flops)

def parse_expected_csv(text: str) -> dict:
    expected: dict[str, tuple] = {}
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("kind,name,shape"):
        raise ConvertError("expected table: not an audit CSV (missing header)")
    for line in lines[1:]:
        cols = line.split(",")
        if cols[0] != "tensor":
            continue
        name, shape = cols[1], cols[2]
        if name in expected:
            raise ConvertError(f"expected table: duplicate tensor '{name}'")
        try:
            expected[name] = tuple(int(d) for d in shape.split("x")) if shape else ()
        except ValueError:
            raise ConvertError(f"expected table: bad shape '{shape}' for '{name}'") from None
    if not expected:
        raise ConvertError("expected table: no tensor rows")
    return expected


def fetch_expected_table() -> dict:
    """Ask the installed model CLI for its tensor table."""
    for cmd in (["biomoe"], [sys.executable, "-m", "biomoe"]):
        try:
            r = subprocess.run(cmd + ["audit", "--format", "csv"],
                               capture_output=True, text=True, timeout=120)
        except (OSError, subprocess.TimeoutExpired):
            continue
        if r.returncode == 0:
            return parse_expected_csv(r.stdout)
    raise ConvertError(
        "cannot run 'biomoe audit --format csv'; pass --expected with a saved table")


# --------------------------------------------------------------------------
# name mapping

def load_name_map(path: str) -> list:
    """JSON {"rules": [[source-regex, target-template], ...]}, order matters."""
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConvertError(f"name map: {e}") from None
    if not isinstance(obj, dict) or "rules" not in obj:
        raise ConvertError("name map: expected an object with a 'rules' list")
    rules = obj["rules"]
    if not isinstance(rules, list) or not rules:
        raise ConvertError("name map: 'rules' must be a non-empty list")
    compiled = []
    for i, rule in enumerate(rules):
        if not (isinstance(rule, list) and len(rule) == 2
                and all(isinstance(x, str) for x in rule)):
            raise ConvertError(f"name map: rule {i} must be [pattern, template]")
        try:
            compiled.append((re.compile(rule[0]), rule[1]))
        except re.error as e:
            raise ConvertError(f"name map: rule {i}: bad pattern ({e})") from None
    return compiled


def apply_map(rules: list, source_names: list) -> dict:
    """First full-match rule wins. Every source tensor must map somewhere and
    no two sources may claim the same target."""
    mapping: dict[str, str] = {}
    owners: dict[str, str] = {}
    unmatched = []
    for src in source_names:
        for pat, template in rules:
            m = pat.fullmatch(src)
            if m:
                dst = m.expand(template)
                if dst in owners:
                    raise ConvertError(
                        f"map collision: '{src}' and '{owners[dst]}' both produce '{dst}'")
                owners[dst] = src
                mapping[src] = dst
                break
        else:
            unmatched.append(src)
    if unmatched:
        raise ConvertError(
            "unmatched source tensor(s): " + ", ".join(sorted(unmatched)))
    return mapping


# --------------------------------------------------------------------------
# conversion

def import_checkpoint(src_path: str, map_path: str, out_path: str,
                      expected_csv: str | None = None,
                      report_path: str | None = None) -> str:
    """Convert one checkpoint. Returns the report text (also written next to
    the container)."""
    try:
        archive = np.load(src_path)
    except (OSError, ValueError) as e:
        raise ConvertError(f"source: {e}") from None
    source = {name: archive[name] for name in archive.files}
    if not source:
        raise ConvertError("source: archive holds no tensors")

    rules = load_name_map(map_path)
    mapping = apply_map(rules, list(source))

    if expected_csv is not None:
        with open(expected_csv, encoding="utf-8") as f:
            expected = parse_expected_csv(f.read())
    else:
        expected = fetch_expected_table()

    produced = {dst: src for src, dst in mapping.items()}
    missing = sorted(set(expected) - set(produced))
    if missing:
        raise ConvertError(f"map produces no tensor for required name(s): "
                           + ", ".join(missing))
    extra = sorted(set(produced) - set(expected))
    if extra:
        raise ConvertError("map produces name(s) the model does not define: "
                           + ", ".join(extra))

    bad_shapes = []
    for dst, src in produced.items():
        got = tuple(source[src].shape)
        if got != expected[dst]:
            bad_shapes.append(f"{src} -> {dst}: {got} != {expected[dst]}")
    if bad_shapes:
        raise ConvertError("shape mismatch (no implicit transposition):\n  "
                           + "\n  ".join(sorted(bad_shapes)))

    # container in table order; every cast is recorded
    lines = [f"import {os.path.basename(src_path)} -> {os.path.basename(out_path)}",
             f"tensors: {len(expected)}", ""]
    out_tensors: dict[str, np.ndarray] = {}
    casts = 0
    for dst in expected:
        src = produced[dst]
        arr = source[src]
        note = ""
        if arr.dtype != np.float32:
            note = f"  [cast {arr.dtype.name} -> float32]"
            casts += 1
        out_tensors[dst] = arr.astype(np.float32, copy=False)
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"{src} -> {dst}  ({shape}){note}")
    lines.append("")
    lines.append(f"dtype casts: {casts}")
    report = "\n".join(lines) + "\n"

    write_container(out_path, out_tensors)
    if report_path is None:
        report_path = out_path + ".report.txt"
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(report)
    return report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="biomoe-import",
        description="convert a .npz checkpoint to a TBME weight container")
    ap.add_argument("src", help=".npz checkpoint archive")
    ap.add_argument("map", help="JSON name-map with ordered [pattern, template] rules")
    ap.add_argument("out", help="output container path")
    ap.add_argument("--expected", default=None,
                    help="saved 'biomoe audit --format csv' table (default: run the CLI)")
    ap.add_argument("--report", default=None,
                    help="report path (default: <out>.report.txt)")
    args = ap.parse_args(argv)
    try:
        report = import_checkpoint(args.src, args.map, args.out,
                                   expected_csv=args.expected,
                                   report_path=args.report)
    except ConvertError as e:
        print(f"biomoe-import: {e}", file=sys.stderr)
        return 1
    sys.stdout.write(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
