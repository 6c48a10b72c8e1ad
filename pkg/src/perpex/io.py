"""Sample files and run manifests.

CSV
    UTF-8, ``\\n`` line endings, header ``value,replica,block``. ``value`` is
    written with ``format(v, '.17g')`` (round-trips every double), the two
    integer columns in decimal. ``block`` is the block index for block maxima
    and the draw index for stationary samples, both per replica and 0-based.

Binary (``.perp``)
    Little-endian throughout::

        offset 0   8 bytes   magic b"PERPEX1\\0"
        offset 8   u64       record count N
        offset 16  N records of 20 bytes each:
                   f64 value, u32 replica, u64 block

    No padding between records; the file is exactly ``16 + 20 N`` bytes.

Manifest
    JSON (sorted keys, two-space indent, trailing newline) validated by
    ``schemas/manifest.schema.json``; it embeds the resolved configuration
    and a SHA-256 digest of every output file.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
from importlib import resources

import numpy as np

from .errors import PerpexError

MAGIC = b"PERPEX1\0"
RECORD = np.dtype([("value", "<f8"), ("replica", "<u4"), ("block", "<u8")])
CSV_HEADER = "value,replica,block\n"


def _columns(values, replica, block):
    values = np.asarray(values, dtype=float)
    replica = np.broadcast_to(np.asarray(replica, dtype=np.int64), values.shape)
    block = np.arange(values.size) if block is None else np.asarray(block, dtype=np.int64)
    return values, replica, block


def write_csv(path, values, replica, block=None):
    """Write rows ``value,replica,block``; returns the row count."""
    values, replica, block = _columns(values, replica, block)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER)
        for v, r, b in zip(values.tolist(), replica.tolist(), block.tolist()):
            fh.write(f"{format(v, '.17g')},{r},{b}\n")
    return values.size


def read_csv(path):
    """``(values, replica, block)`` arrays from a file written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header != CSV_HEADER:
            raise PerpexError(f"{path}: unexpected header {header!r}")
        rows = fh.read()
    if not rows.strip():
        return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    data = np.loadtxt(rows.splitlines(), delimiter=",", ndmin=1,
                      dtype=[("value", "f8"), ("replica", "i8"), ("block", "i8")])
    return data["value"], data["replica"], data["block"]


def write_binary(path, values, replica, block=None):
    values, replica, block = _columns(values, replica, block)
    rec = np.empty(values.size, dtype=RECORD)
    rec["value"], rec["replica"], rec["block"] = values, replica, block
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(values.size).astype("<u8").tobytes())
        fh.write(rec.tobytes())
    return values.size


def read_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise PerpexError(f"{path}: bad magic {raw[:8]!r}")
    n = int(np.frombuffer(raw, "<u8", 1, 8)[0])
    if len(raw) != 16 + RECORD.itemsize * n:
        raise PerpexError(f"{path}: size {len(raw)} does not match {n} records")
    rec = np.frombuffer(raw, RECORD, n, 16)
    return rec["value"].copy(), rec["replica"].astype(np.int64), rec["block"].astype(np.int64)


def write_ecdf_csv(path, view):
    """ECDF export: header ``value,level``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,level\n")
        for v, lv in view.to_rows():
            fh.write(f"{format(v, '.17g')},{format(lv, '.17g')}\n")


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def version_string():
    """Package version, with ``git describe`` appended when run from a checkout."""
    from . import __version__

    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        tag = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+{tag}" if tag else __version__


def manifest(command, config, outputs, rows=None):
    """Manifest for a run; ``outputs`` are file paths, recorded by base name."""
    files = []
    for p in outputs:
        entry = {"name": os.path.basename(p), "sha256": sha256(p), "bytes": os.path.getsize(p)}
        if rows is not None:
            entry["rows"] = int(rows)
        files.append(entry)
    return {
        "tool": "perpex",
        "version": version_string(),
        "command": command,
        "seed": config["seed"],
        "spec": config["distribution"],
        "config": config,
        "outputs": files,
    }


def manifest_schema():
    return json.loads(resources.files("perpex").joinpath("schemas/manifest.schema.json").read_text())
