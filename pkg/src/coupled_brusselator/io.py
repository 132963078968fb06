"""Snapshot files, time-series CSV and plain-text summaries.

Snapshot layout (all little-endian)::

    8s   magic  b"BRUSSNAP"
    u4   format version (1)
    u4   reserved (0)
    u4   dim
    u4   counts[dim]
    f8   time
    f8   u, v, w, z   (each row-major over counts)
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .fields import FieldQuartet

__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
    "CSV_COLUMNS",
    "Snapshot",
    "encode_snapshot",
    "decode_snapshot",
    "write_snapshot",
    "read_snapshot",
    "write_timeseries",
    "read_timeseries",
    "format_value",
    "format_summary",
    "write_summary",
    "read_summary",
    "strip_timing",
]

SNAPSHOT_MAGIC = b"BRUSSNAP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sII")

CSV_COLUMNS = (
    "t", "l2sq_u", "l2sq_v", "l2sq_w", "l2sq_z",
    "gradsq_u", "gradsq_v", "gradsq_w", "gradsq_z", "l2sq_y", "l2sq_psi",
)


@dataclass(frozen=True)
class Snapshot:
    counts: tuple
    time: float
    data: np.ndarray

    @property
    def dim(self):
        return len(self.counts)

    def quartet(self, grid):
        """Attach the stored fields to ``grid`` (node counts must agree)."""
        if tuple(grid.counts) != tuple(self.counts):
            raise InvalidArgumentError(f"snapshot counts {self.counts} do not match grid {grid.counts}")
        return FieldQuartet(grid, self.data)


def encode_snapshot(data, time):
    data = np.asarray(data, dtype=float)
    if data.ndim not in (2, 3) or data.shape[0] != 4:
        raise InvalidArgumentError(f"snapshot data must have shape (4, *counts), got {data.shape}")
    counts = data.shape[1:]
    parts = [
        _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, 0),
        struct.pack(f"<I{len(counts)}I", len(counts), *counts),
        struct.pack("<d", float(time)),
        np.ascontiguousarray(data, dtype="<f8").tobytes(order="C"),
    ]
    return b"".join(parts)


def decode_snapshot(buf):
    if len(buf) < _HEADER.size + 4:
        raise InvalidArgumentError("truncated snapshot header")
    magic, version, _ = _HEADER.unpack_from(buf, 0)
    if magic != SNAPSHOT_MAGIC:
        raise InvalidArgumentError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise InvalidArgumentError(f"unsupported snapshot version {version}")
    pos = _HEADER.size
    (dim,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if dim not in (1, 2):
        raise InvalidArgumentError(f"bad snapshot dimension {dim}")
    counts = struct.unpack_from(f"<{dim}I", buf, pos)
    pos += 4 * dim
    (t,) = struct.unpack_from("<d", buf, pos)
    pos += 8
    n = 4 * int(np.prod(counts))
    if len(buf) != pos + 8 * n:
        raise InvalidArgumentError(f"snapshot payload has {len(buf) - pos} bytes, expected {8 * n}")
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(float).reshape((4,) + counts)
    return Snapshot(counts=tuple(counts), time=t, data=data)


def write_snapshot(path, data, time):
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(data, time))


def read_snapshot(path):
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


def format_value(v):
    """Deterministic text form: ``repr`` for floats, comma lists for sequences."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "auto"
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(format_value(x) for x in v)
    return str(v)


def write_timeseries(path, traj):
    """Write the fixed-column observable table of a trajectory."""
    cols = [traj.times] + [traj[c] for c in CSV_COLUMNS[1:]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def read_timeseries(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise InvalidArgumentError(f"{path}: unexpected CSV header")
    arr = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {c: arr[:, i] for i, c in enumerate(CSV_COLUMNS)}


def format_summary(entries):
    """Render ``(key, value)`` pairs as ``key = value`` lines."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in entries)


def write_summary(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_summary(entries))


def read_summary(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if " = " in line:
                k, v = line.rstrip("\n").split(" = ", 1)
                out[k] = v
    return out


def strip_timing(text):
    """Summary text without its ``timing.*`` lines."""
    return "".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("timing."))
