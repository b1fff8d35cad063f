"""Binary and CSV persistence for weighted ensembles.

Binary container layout (all little-endian)::

    magic        8 bytes   b"KDVLENS1"
    n            uint32    grid size
    count        uint64    number of members
    master_seed  uint64
    name_len     uint16
    name         name_len bytes, UTF-8 measure name
    count records, each: n float64 grid values followed by one float64 log-weight
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import IoFailure
from .field import GridField, TorusGrid
from .samplers import WeightedEnsemble

MAGIC = b"KDVLENS1"
_HEADER = struct.Struct("<IQQH")


def write_ensemble(e: WeightedEnsemble, path) -> None:
    name = e.measure.encode("utf-8")
    if len(name) > 0xFFFF:
        raise ValueError("measure name too long")
    records = np.empty((len(e), e.n + 1), dtype="<f8")
    records[:, :-1] = e.values
    records[:, -1] = e.log_weights
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(e.n, len(e), int(e.master_seed), len(name)))
            fh.write(name)
            fh.write(records.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write ensemble to {path}: {exc}") from exc


def read_ensemble(path) -> WeightedEnsemble:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read ensemble from {path}: {exc}") from exc
    if data[:8] != MAGIC:
        raise IoFailure(f"{path}: not an ensemble container (bad magic)")
    off = 8
    if len(data) < off + _HEADER.size:
        raise IoFailure(f"{path}: truncated header")
    n, count, seed, name_len = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    name = data[off : off + name_len].decode("utf-8")
    off += name_len
    expected = count * (n + 1) * 8
    if len(data) - off != expected:
        raise IoFailure(f"{path}: expected {expected} payload bytes, found {len(data) - off}")
    records = np.frombuffer(data, dtype="<f8", offset=off).reshape(count, n + 1).astype(float)
    return WeightedEnsemble(GridField(TorusGrid(n), records[:, :-1]), records[:, -1], name, seed)


def write_ensemble_csv(e: WeightedEnsemble, path) -> None:
    """One row per member: ``member, log_weight, x_0 .. x_{n-1}``."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["member", "log_weight"] + [f"x_{i}" for i in range(e.n)])
            for i, (lw, row) in enumerate(zip(e.log_weights, e.values)):
                writer.writerow([i, repr(float(lw))] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise IoFailure(f"cannot write CSV to {path}: {exc}") from exc
