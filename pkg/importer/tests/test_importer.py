import json
import math
import os
import struct
import subprocess
import zlib

import numpy as np
import pytest

from tbme_import import (
    ConvertError,
    apply_map,
    container_bytes,
    import_checkpoint,
    load_name_map,
    parse_expected_csv,
)


def parse_container(data: bytes) -> dict:
    """Local reference parser so container tests do not lean on the writer."""
    assert zlib.crc32(data[:-4]) & 0xFFFFFFFF == struct.unpack("<I", data[-4:])[0]
    assert data[:4] == b"TBME"
    version, count = struct.unpack_from("<II", data, 4)
    assert version == 1
    pos = 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        dtype, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        assert dtype == 0
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = math.prod(dims)
        out[name] = np.frombuffer(data, "<f4", n, pos).reshape(dims).copy()
        pos += 4 * n
    assert pos == len(data) - 4
    return out


def write_npz(path, tensors):
    np.savez(path, **tensors)
    return str(path)


def write_map(path, rules):
    path.write_text(json.dumps({"rules": rules}))
    return str(path)


def write_expected(path, rows):
    lines = ["kind,name,shape,params,flops"]
    for name, shape in rows:
        lines.append(f"tensor,{name},{'x'.join(str(d) for d in shape)},{math.prod(shape)},")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


TOY_ROWS = [("alpha.w", (2, 3)), ("alpha.b", (3,)), ("beta.w", (4, 2, 2))]


def toy_source(rng, prefix="ckpt/", dtype=np.float64):
    return {prefix + name: rng.standard_normal(shape).astype(dtype)
            for name, shape in TOY_ROWS}


def test_toy_import_writes_valid_container(tmp_path):
    rng = np.random.default_rng(0)
    source = toy_source(rng)
    src = write_npz(tmp_path / "ckpt.npz", source)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    out = str(tmp_path / "out.tbme")
    import_checkpoint(src, mp, out, expected_csv=exp)
    got = parse_container(open(out, "rb").read())
    assert list(got) == [name for name, _ in TOY_ROWS]
    for name, shape in TOY_ROWS:
        ref = source["ckpt/" + name].astype(np.float32)
        assert got[name].shape == shape
        np.testing.assert_array_equal(got[name], ref)


def test_container_order_follows_expected_table(tmp_path):
    rng = np.random.default_rng(1)
    source = toy_source(rng)
    # scramble source insertion order; the container must follow the table
    scrambled = {k: source[k] for k in reversed(list(source))}
    src = write_npz(tmp_path / "ckpt.npz", scrambled)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    out = str(tmp_path / "out.tbme")
    import_checkpoint(src, mp, out, expected_csv=exp)
    got = parse_container(open(out, "rb").read())
    assert list(got) == [name for name, _ in TOY_ROWS]


def test_missing_required_name_fatal(tmp_path):
    rng = np.random.default_rng(2)
    source = toy_source(rng)
    del source["ckpt/beta.w"]
    src = write_npz(tmp_path / "ckpt.npz", source)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    with pytest.raises(ConvertError, match=r"required name.*beta\.w"):
        import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)


def test_extra_name_fatal(tmp_path):
    rng = np.random.default_rng(3)
    source = toy_source(rng)
    source["ckpt/gamma.w"] = rng.standard_normal((2,))
    src = write_npz(tmp_path / "ckpt.npz", source)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    with pytest.raises(ConvertError, match=r"does not define.*gamma\.w"):
        import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)


def test_unmatched_source_fatal(tmp_path):
    rng = np.random.default_rng(4)
    source = toy_source(rng)
    source["stray.tensor"] = rng.standard_normal((2,))
    src = write_npz(tmp_path / "ckpt.npz", source)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    with pytest.raises(ConvertError, match=r"unmatched source.*stray\.tensor"):
        import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)


def test_shape_mismatch_fatal_names_offender(tmp_path):
    rng = np.random.default_rng(5)
    source = toy_source(rng)
    source["ckpt/alpha.w"] = source["ckpt/alpha.w"].T  # (3, 2), a transposition
    src = write_npz(tmp_path / "ckpt.npz", source)
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    with pytest.raises(ConvertError) as e:
        import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)
    msg = str(e.value)
    assert "alpha.w" in msg and "(3, 2)" in msg and "(2, 3)" in msg
    assert "transposition" in msg


def test_map_collision_fatal(tmp_path):
    rng = np.random.default_rng(6)
    src = write_npz(tmp_path / "ckpt.npz",
                    {"a.w": rng.standard_normal((2,)),
                     "b.w": rng.standard_normal((2,))})
    mp = write_map(tmp_path / "map.json", [["^.*$", "same.w"]])
    exp = write_expected(tmp_path / "expected.csv", [("same.w", (2,))])
    with pytest.raises(ConvertError, match="collision"):
        import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)


def test_first_matching_rule_wins():
    rules = load_name_map_from([["^x$", "first"], ["^x$", "second"],
                                ["^(.*)$", r"pass.\1"]])
    assert apply_map(rules, ["x", "y"]) == {"x": "first", "y": "pass.y"}


def load_name_map_from(rules):
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
        json.dump({"rules": rules}, f)
        path = f.name
    try:
        return load_name_map(path)
    finally:
        os.unlink(path)


@pytest.mark.parametrize("body", [
    "not json", "[]", '{"rules": []}', '{"rules": [["only-one-element"]]}',
    '{"rules": [["(unclosed", "t"]]}',
])
def test_bad_map_rejected(tmp_path, body):
    p = tmp_path / "map.json"
    p.write_text(body)
    with pytest.raises(ConvertError):
        load_name_map(str(p))


def test_cast_flagged_in_report(tmp_path):
    rng = np.random.default_rng(7)
    src = write_npz(tmp_path / "ckpt.npz", toy_source(rng, dtype=np.float64))
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    out = str(tmp_path / "out.tbme")
    report = import_checkpoint(src, mp, out, expected_csv=exp)
    assert report.count("[cast float64 -> float32]") == len(TOY_ROWS)
    assert f"dtype casts: {len(TOY_ROWS)}" in report
    # report lands next to the container too
    on_disk = open(out + ".report.txt", encoding="utf-8").read()
    assert on_disk == report


def test_native_f32_reports_zero_casts(tmp_path):
    rng = np.random.default_rng(8)
    src = write_npz(tmp_path / "ckpt.npz", toy_source(rng, dtype=np.float32))
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    report = import_checkpoint(src, mp, str(tmp_path / "out.tbme"), expected_csv=exp)
    assert "cast" in report  # the summary line
    assert "dtype casts: 0" in report
    assert "[cast" not in report


def test_expected_csv_parser():
    table = parse_expected_csv(
        "kind,name,shape,params,flops\n"
        "tensor,a.w,2x3,6,\n"
        "target,total,,10,20\n"
        "tensor,b.w,4,4,\n")
    assert table == {"a.w": (2, 3), "b.w": (4,)}
    with pytest.raises(ConvertError, match="header"):
        parse_expected_csv("name,shape\na,2\n")
    with pytest.raises(ConvertError, match="duplicate"):
        parse_expected_csv("kind,name,shape,params,flops\n"
                           "tensor,a.w,2,2,\ntensor,a.w,2,2,\n")


def test_container_bytes_rejects_bad_names():
    with pytest.raises(ConvertError):
        container_bytes({"": np.zeros(1, np.float32)})


# ----------------------------------------------------------------------
# round trip against the installed model CLI (external interfaces only)

def _audit_table() -> dict:
    r = subprocess.run(["biomoe", "audit", "--format", "csv"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    return parse_expected_csv(r.stdout)


def _signal_csv(path) -> str:
    rate, seconds = 32.0, 60
    rows = ["%.9f" % (math.sin(2 * math.pi * 1.0 * t / rate)
                      + 0.3 * math.sin(2 * math.pi * 3.0 * t / rate))
            for t in range(int(rate * seconds))]
    path.write_text("\n".join(rows) + "\n")
    return str(path)


def _embed_stdout(weights: str, signal: str) -> bytes:
    r = subprocess.run(
        ["biomoe", "embed", signal, "--weights", weights,
         "--modality", "eda", "--rate", "32", "--kind", "scalogram"],
        capture_output=True, timeout=300)
    assert r.returncode == 0, r.stderr.decode()
    return r.stdout


def test_round_trip_matches_direct_container(tmp_path):
    """A float64 checkpoint imported through the name map must drive the
    model CLI to byte-identical output versus a container built directly
    from the same values, i.e. the conversion costs at most the one
    correctly rounded float64 to float32 cast."""
    expected = _audit_table()
    rng = np.random.default_rng(0xC0FFEE)
    f64 = {name: rng.uniform(-0.04, 0.04, shape)
           for name, shape in expected.items()}
    for name in f64:
        if name.endswith(".bn.v"):  # running variances must stay non-negative
            np.abs(f64[name], out=f64[name])

    src = write_npz(tmp_path / "ckpt.npz",
                    {"ckpt/" + name: arr for name, arr in f64.items()})
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp_csv = tmp_path / "expected.csv"
    r = subprocess.run(["biomoe", "audit", "--format", "csv"],
                       capture_output=True, text=True, timeout=120)
    exp_csv.write_text(r.stdout)

    imported = str(tmp_path / "imported.tbme")
    report = import_checkpoint(src, mp, imported, expected_csv=str(exp_csv))
    assert f"tensors: {len(expected)}" in report

    direct = str(tmp_path / "direct.tbme")
    with open(direct, "wb") as f:
        f.write(container_bytes(
            {name: arr.astype(np.float32) for name, arr in f64.items()}))

    sig = _signal_csv(tmp_path / "sig.csv")
    out_imported = _embed_stdout(imported, sig)
    out_direct = _embed_stdout(direct, sig)
    assert len(out_imported.splitlines()) == 192
    assert out_imported == out_direct


def test_cli_entry_point(tmp_path):
    rng = np.random.default_rng(9)
    src = write_npz(tmp_path / "ckpt.npz", toy_source(rng))
    mp = write_map(tmp_path / "map.json", [["^ckpt/(.*)$", r"\1"]])
    exp = write_expected(tmp_path / "expected.csv", TOY_ROWS)
    out = str(tmp_path / "out.tbme")
    r = subprocess.run(
        ["biomoe-import", src, mp, out, "--expected", exp],
        capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    assert "dtype casts: 3" in r.stdout
    assert os.path.exists(out) and os.path.exists(out + ".report.txt")
    # failure path: exit 1 with the offender on stderr
    bad = write_map(tmp_path / "bad.json", [["^ckpt/alpha(.*)$", r"alpha\1"]])
    r = subprocess.run(
        ["biomoe-import", src, bad, out, "--expected", exp],
        capture_output=True, text=True, timeout=120)
    assert r.returncode == 1
    assert "beta.w" in r.stderr
