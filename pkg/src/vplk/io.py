"""``.vplk`` snapshot files and the run CSV.

Snapshot layout: a 64-byte little-endian header followed by the payload as
row-major float64, component-major, i.e. shape
``(ncomp, *[nx] * dimx, nv, nv, nv)``.

====== ======= =========================================
offset type    field
====== ======= =========================================
0      4s      magic ``b"VPLK"``
4      u16     format version
6      u8      tag (0 pm, 1 sd, 2 raw)
7      u8      number of components
8      u8      spatial dimension (0 for velocity-only data)
12     u32     nx
16     u32     nv
20     f64     velocity cutoff V
28     f64     box length
36     f64     time stamp
44     pad     zeros up to 64
====== ======= =========================================
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .grid import PhaseField, SpatialGrid, VelocityGrid, build_velocity_grid

MAGIC = b"VPLK"
VERSION = 1
HEADER = struct.Struct("<4sHBBB3xIIddd20x")
TAGS = {"pm": 0, "sd": 1, "raw": 2}
_TAG_NAMES = {v: k for k, v in TAGS.items()}
assert HEADER.size == 64


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    values: np.ndarray
    tag: str
    nv: int
    vcut: float
    dimx: int
    nx: int
    lx: float
    t: float = 0.0

    def phase_field(self) -> PhaseField:
        if self.tag == "raw":
            raise SnapshotError("raw snapshots carry no pm/sd tag")
        return PhaseField(self.values, self.tag, {"t": self.t})

    def grids(self) -> tuple[VelocityGrid, SpatialGrid | None]:
        vg = build_velocity_grid(self.nv, self.vcut)
        xg = SpatialGrid(self.dimx, self.nx, self.lx) if self.dimx > 0 else None
        return vg, xg


def write_snapshot(path, values, vgrid: VelocityGrid, xgrid: SpatialGrid | None = None,
                   tag: str = "raw", t: float = 0.0) -> None:
    """Write ``values`` of shape ``(ncomp, *xshape, n, n, n)`` (or ``(*xshape, n, n, n)``)."""
    if tag not in TAGS:
        raise SnapshotError(f"unknown tag {tag!r}")
    arr = np.asarray(values, dtype="<f8")
    dimx = 0 if xgrid is None else xgrid.dim
    tail = (xgrid.shape if xgrid is not None else ()) + vgrid.shape
    if arr.shape == tail:
        arr = arr[None]
    if arr.shape[1:] != tail:
        raise SnapshotError(f"payload shape {arr.shape} does not match grids {tail}")
    if tag in ("pm", "sd") and arr.shape[0] != 2:
        raise SnapshotError("pm/sd snapshots need exactly two components")
    header = HEADER.pack(MAGIC, VERSION, TAGS[tag], arr.shape[0], dimx,
                         0 if xgrid is None else xgrid.n_per_axis, vgrid.n_per_axis,
                         vgrid.cutoff, 0.0 if xgrid is None else xgrid.box_length, float(t))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes(order="C"))
    os.replace(tmp, path)


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise SnapshotError("file shorter than the header")
    magic, version, tag, ncomp, dimx, nx, nv, vcut, lx, t = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    if tag not in _TAG_NAMES:
        raise SnapshotError(f"unknown tag code {tag}")
    shape = (ncomp,) + (nx,) * dimx + (nv,) * 3
    count = int(np.prod(shape))
    if len(raw) != HEADER.size + 8 * count:
        raise SnapshotError(f"payload has {(len(raw) - HEADER.size) // 8} values, expected {count}")
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(shape).astype(float)
    return Snapshot(values, _TAG_NAMES[tag], nv, vcut, dimx, nx, lx, t)


# ---------------------------------------------------------------------------
# CSV


def format_value(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path, columns: dict) -> None:
    """Write equal-length channels with 17 significant digits."""
    names = list(columns)
    n = {len(v) for v in columns.values()}
    if len(n) > 1:
        raise ValueError("columns must have equal lengths")
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([format_value(x) for x in row])
    os.replace(tmp, path)


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    names = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}
