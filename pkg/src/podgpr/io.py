"""On-disk formats.

Binary field container (little endian)::

    offset  size  content
    0       8     magic b"PODGPR01"
    8       8     uint64 n_rows   (N_h)
    16      8     uint64 n_cols   (time steps, or basis vectors)
    24      8     float64 dt      (0 for a basis)
    32      ...   float64 payload, column-major (one column after another)

Each container ``name.bin`` has a JSON sidecar ``name.bin.json`` with free
metadata.  Tables are CSV with a header row.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC",
    "write_container",
    "read_container",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "file_digest",
    "array_digest",
]

MAGIC = b"PODGPR01"
_HEADER = struct.Struct("<8sQQd")


def write_container(path, matrix, dt=0.0, meta=None):
    """Write a 2-D float array and its sidecar."""
    path = Path(path)
    a = np.asarray(matrix, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("container payload must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1], float(dt)))
        fh.write(a.tobytes(order="F"))
    write_json(Path(str(path) + ".json"), meta or {})


def read_container(path):
    """Return ``(matrix, dt, meta)``."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n_rows, n_cols, dt = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * n_rows * n_cols
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    a = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape((n_rows, n_cols), order="F")
    side = Path(str(path) + ".json")
    meta = read_json(side) if side.exists() else {}
    return np.array(a, dtype=float), dt, meta


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_csv(path, header, rows):
    """Write rows with ``repr``-exact floats so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path):
    """Return ``(header, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def array_digest(a):
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()
