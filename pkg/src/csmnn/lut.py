"""CSM-LUT backend: dense N-d tables with multilinear interpolation."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BuildError, ParseError, QueryError

LUT_MAGIC = b"CSMLUT01"


@dataclass(frozen=True)
class LutTable:
    axes: tuple  # per-axis sorted grid points
    values: np.ndarray  # shape == tuple(len(a) for a in axes)

    def __post_init__(self):
        for a in self.axes:
            if len(a) < 2 or np.any(np.diff(a) <= 0):
                raise BuildError("axes must be strictly increasing with >= 2 points")
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise BuildError("value array does not match axis lengths")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return self.values.shape


def build(ds) -> LutTable:
    """Arrange a full-grid :class:`CharDataset` into a table."""
    X = np.asarray(ds.X, dtype=float)
    axes = tuple(np.unique(X[:, d]) for d in range(X.shape[1]))
    shape = tuple(len(a) for a in axes)
    if len(X) != int(np.prod(shape)):
        raise BuildError(f"dataset has {len(X)} rows, full grid needs {int(np.prod(shape))}")
    idx = tuple(np.searchsorted(a, X[:, d]) for d, a in enumerate(axes))
    flat = np.ravel_multi_index(idx, shape)
    if len(np.unique(flat)) != len(flat):
        raise BuildError("dataset repeats grid points")
    values = np.empty(len(flat))
    values[flat] = ds.y
    return LutTable(axes, values.reshape(shape))


def _packed_axes(axes):
    lens = np.array([len(a) for a in axes], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64)
    return np.ascontiguousarray(np.concatenate(axes), dtype=float), offsets, lens


def query(t: LutTable, v) -> float:
    """Multilinear interpolation at ``v``; coordinates are clamped to the grid."""
    v = np.ascontiguousarray(v, dtype=float).ravel()
    if len(v) != t.dim:
        raise QueryError(f"query has dimension {len(v)}, table has {t.dim}")
    axes, offsets, lens = _packed_axes(t.axes)
    out = np.empty(1)
    kernels.lut_eval(np.ascontiguousarray(t.values.reshape(1, -1)), axes, offsets, lens, v, out)
    return float(out[0])


def size_bytes(dims: int, components: int, points_per_dim: int, fp_bytes: int = 4) -> int:
    """Storage needed for ``components`` tables of ``points_per_dim**dims`` entries."""
    return components * points_per_dim**dims * fp_bytes


class LutSet:
    """All component tables of one cell on a shared grid, evaluated together."""

    kind = "lut"

    def __init__(self, names, tables):
        self.names = tuple(names)
        self.tables = tuple(tables)
        first = self.tables[0]
        for t in self.tables[1:]:
            if len(t.axes) != len(first.axes) or any(
                not np.array_equal(a, b) for a, b in zip(t.axes, first.axes)
            ):
                raise BuildError("component tables of one cell must share a grid")
        self.dim = first.dim
        self._axes, self._offsets, self._lens = _packed_axes(first.axes)
        self._values = np.ascontiguousarray(np.stack([t.values.ravel() for t in self.tables]))

    @classmethod
    def from_datasets(cls, datasets: dict) -> "LutSet":
        return cls(list(datasets), [build(ds) for ds in datasets.values()])

    def evaluate(self, v, out=None):
        if out is None:
            out = np.empty(len(self.names))
        kernels.lut_eval(self._values, self._axes, self._offsets, self._lens, v, out)
        return out

    def table_bytes(self, fp_bytes: int = 4) -> int:
        return sum(t.values.size for t in self.tables) * fp_bytes


# ----------------------------------------------------------------------------
# binary table files: magic, uint32 D, uint32 lengths[D], float64 axes, float64 values
# all little-endian, values row-major


def dump_table(t: LutTable) -> bytes:
    parts = [LUT_MAGIC, struct.pack("<I", t.dim)]
    parts.append(struct.pack(f"<{t.dim}I", *t.shape))
    for a in t.axes:
        parts.append(np.asarray(a, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(t.values, dtype="<f8").tobytes())
    return b"".join(parts)


def load_table(blob: bytes) -> LutTable:
    if blob[:8] != LUT_MAGIC:
        raise ParseError("not a csmnn LUT file")
    (D,) = struct.unpack_from("<I", blob, 8)
    shape = struct.unpack_from(f"<{D}I", blob, 12)
    pos = 12 + 4 * D
    axes = []
    for n in shape:
        axes.append(np.frombuffer(blob, dtype="<f8", count=n, offset=pos).astype(float))
        pos += 8 * n
    count = int(np.prod(shape))
    if len(blob) != pos + 8 * count:
        raise ParseError("LUT file truncated or oversized")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(float)
    return LutTable(tuple(axes), values.reshape(shape))


def write_table(t: LutTable, path) -> Path:
    path = Path(path)
    path.write_bytes(dump_table(t))
    return path


def read_table(path) -> LutTable:
    return load_table(Path(path).read_bytes())
