import json
import os

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from perpex import io
from perpex.config import DEFAULT_SPEC, params_for, resolve
from perpex.ecdf import EcdfView
from perpex.errors import ConfigError, PerpexError
from perpex.mdist import format_spec, parse_spec

FLOATS = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(v=arrays(np.float64, st.integers(0, 50), elements=FLOATS), rep=st.integers(0, 2**31))
def test_csv_round_trip(tmp_path_factory, v, rep):
    p = tmp_path_factory.mktemp("csv") / "s.csv"
    assert io.write_csv(p, v, rep) == v.size
    values, replica, block = io.read_csv(p)
    assert values.tobytes() == v.tobytes()
    assert np.all(replica == rep) and np.array_equal(block, np.arange(v.size))


@settings(max_examples=40, deadline=None)
@given(v=arrays(np.float64, st.integers(0, 50), elements=FLOATS))
def test_binary_round_trip(tmp_path_factory, v):
    p = tmp_path_factory.mktemp("bin") / "s.perp"
    block = np.arange(v.size, dtype=np.int64) * 2**33
    io.write_binary(p, v, 7, block)
    assert os.path.getsize(p) == 16 + 20 * v.size
    values, replica, blk = io.read_binary(p)
    assert values.tobytes() == v.tobytes()
    assert np.all(replica == 7) and np.array_equal(blk, block)


def test_binary_layout(tmp_path):
    p = tmp_path / "s.perp"
    io.write_binary(p, [1.5], 3, [9])
    raw = p.read_bytes()
    assert raw[:8] == b"PERPEX1\0"
    assert int.from_bytes(raw[8:16], "little") == 1
    assert np.frombuffer(raw[16:24], "<f8")[0] == 1.5
    assert int.from_bytes(raw[24:28], "little") == 3
    assert int.from_bytes(raw[28:36], "little") == 9


def test_corrupt_files(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOTPERP\0" + bytes(8))
    with pytest.raises(PerpexError):
        io.read_binary(p)
    p.write_bytes(b"PERPEX1\0" + (5).to_bytes(8, "little"))
    with pytest.raises(PerpexError):
        io.read_binary(p)
    p.write_text("x,y\n1,2\n")
    with pytest.raises(PerpexError):
        io.read_csv(p)


def test_ecdf_csv(tmp_path):
    p = tmp_path / "e.csv"
    io.write_ecdf_csv(p, EcdfView([3.0, 1.0, 2.0, 2.0]))
    lines = p.read_text().splitlines()
    assert lines[0] == "value,level"
    assert [tuple(map(float, ln.split(","))) for ln in lines[1:]] == [(1, 0.25), (2, 0.5), (2, 0.75), (3, 1.0)]


def test_dumps_rejects_nan():
    assert io.dumps({"b": 1, "a": [1.0]}).startswith('{\n  "a"')
    with pytest.raises(ValueError):
        io.dumps({"x": float("nan")})


def test_manifest_validates(tmp_path):
    p = tmp_path / "out.csv"
    io.write_csv(p, [1.0, 2.0], 0)
    cfg = resolve("simulate", environ={})
    man = io.manifest("simulate", cfg, [str(p)], rows=2)
    jsonschema.validate(man, io.manifest_schema())
    assert man["outputs"][0]["name"] == "out.csv"
    assert man["outputs"][0]["sha256"] == io.sha256(p)
    assert man["outputs"][0]["bytes"] == os.path.getsize(p)
    bad = json.loads(json.dumps(man))
    bad["outputs"][0]["sha256"] = "xyz"
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, io.manifest_schema())


# -- configuration ----------------------------------------------------------------------------


def write(tmp_path, text):
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return str(p)


def test_defaults():
    cfg = resolve("maxima-gof", environ={})
    assert cfg["block_lens"] == [100, 10000] and cfg["n_blocks"] == 2000 and cfg["theta"] == "estimated"
    assert cfg["distribution"] == format_spec(parse_spec(DEFAULT_SPEC))
    assert cfg["command"] == "maxima-gof"
    assert resolve("simulate", environ={})["samples"] == 10**4
    assert resolve("tailcheck", environ={})["samples"] == 10**6


def test_precedence(tmp_path):
    path = write(tmp_path, "[run]\nseed = 1\nq = 2\n[norming]\nseed = 2\nlog_n = 50\n"
                           "[tailcheck]\nsamples = 5\n")
    cfg = resolve("norming", path, environ={})
    assert (cfg["seed"], cfg["q"], cfg["log_n"]) == (2, 2.0, 50.0)
    assert resolve("norming", path, environ={"PERP_SEED": "9"})["seed"] == 9
    assert resolve("norming", path, flags={"seed": "4"}, environ={"PERP_SEED": "9"})["seed"] == 4
    assert resolve("tailcheck", path, environ={})["seed"] == 1


def test_distribution_section_and_spec_flag(tmp_path):
    path = write(tmp_path, "[distribution]\nfamily = atom\np0 = 0.3\nbase.family = beta\n"
                           "base.alpha = 1\nbase.beta = 1\n")
    cfg = resolve("simulate", path, environ={})
    assert parse_spec(cfg["distribution"]).p0 == 0.3
    cfg = resolve("simulate", path, spec_text="family=rfamily r=2", environ={})
    assert parse_spec(cfg["distribution"]).r == 2.0


def test_numeric_forms():
    cfg = resolve("extremal-index", flags={"n": "1e6", "cond_percentiles": ["99", "99.9"]}, environ={})
    assert cfg["n"] == 10**6 and cfg["cond_percentiles"] == [99.0, 99.9]
    assert resolve("maxima-gof", flags={"theta": "0.7"}, environ={})["theta"] == 0.7
    assert resolve("maxima-gof", flags={"best_fit": "true"}, environ={})["best_fit"] is True


@pytest.mark.parametrize("text,where", [
    ("[run]\nseed = 1\nbogus = 3\n", ":3"),
    ("[run]\n\nq = -1\n", ":3"),
    ("[simulate]\nmode = stationary\n[norming]\nblock_lens = 10\n", ":4"),
    ("[distribution]\nfamily = beta\nalpha = 0\nbeta = 1\n", ":3"),
])
def test_errors_name_line(tmp_path, text, where):
    path = write(tmp_path, text)
    with pytest.raises(ConfigError) as err:
        resolve("norming", path, environ={})
    assert f"exp.ini{where}" in str(err.value)


def test_other_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        resolve("norming", write(tmp_path, "[nope]\nx = 1\n"), environ={})
    with pytest.raises(ConfigError):
        resolve("norming", str(tmp_path / "missing.ini"), environ={})
    with pytest.raises(ConfigError, match="PERP_SEED"):
        resolve("norming", environ={"PERP_SEED": "-3"})
    with pytest.raises(ConfigError, match="does not apply"):
        resolve("norming", flags={"samples": "10"}, environ={})
    with pytest.raises(ConfigError):
        resolve("simulate", flags={"n": "1.5"}, environ={})
    with pytest.raises(ConfigError):
        resolve("maxima-gof", flags={"theta": "1.5"}, environ={})


def test_every_param_has_a_default_per_command():
    for cmd in ("simulate", "maxima-gof", "norming", "extremal-index", "tailcheck"):
        cfg = resolve(cmd, environ={})
        for key in params_for(cmd):
            assert key in cfg
