"""Grid characterization of library cells into CSM component datasets."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cells import dc_component_value, get_cell
from .device import DeviceSet
from .errors import ConfigError, ParseError, SizeError

RESOLUTIONS = {"S": 0.01, "N": 0.05, "C": 0.1}
RESOLUTION_NAMES = {"S": "Soft", "N": "Normal", "C": "Coarse"}


@dataclass(frozen=True)
class Resolution:
    name: str
    step: float

    @classmethod
    def named(cls, name: str) -> "Resolution":
        key = name[:1].upper()
        if key not in RESOLUTIONS or name.capitalize() not in (key, RESOLUTION_NAMES[key]):
            raise ConfigError(f"unknown resolution {name!r}; expected S, N or C")
        return cls(key, RESOLUTIONS[key])


@dataclass
class CharDataset:
    cell: str
    corner: str
    component: str
    args: tuple  # axis (node) names
    step: float
    vdd: float
    X: np.ndarray  # (rows, D) voltages
    y: np.ndarray  # (rows,) component values

    @property
    def dim(self) -> int:
        return len(self.args)

    @property
    def rows(self) -> int:
        return len(self.y)

    def axis(self) -> np.ndarray:
        return grid_axis(self.vdd, self.step)


def grid_axis(vdd: float, step: float) -> np.ndarray:
    """Points ``0, step, 2 step, ...`` up to ``vdd``; ``vdd`` always included."""
    if step <= 0 or step > vdd + 1e-12:
        raise ConfigError(f"step {step} must lie in (0, vdd={vdd}]")
    n = int(np.floor(vdd / step + 1e-9))
    pts = [round(i * step, 12) for i in range(n + 1)]
    if vdd - pts[-1] > 1e-9:
        pts.append(vdd)
    else:
        pts[-1] = vdd
    return np.array(pts)


def grid_points(vdd: float, step: float, dim: int) -> np.ndarray:
    """Row-major Cartesian grid, shape ``(len(axis)**dim, dim)``."""
    ax = grid_axis(vdd, step)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def characterize(cell: str, devices: DeviceSet, resolution) -> dict:
    """Sweep every schema component of ``cell`` over the full voltage grid.

    Returns an ordered ``{component name: CharDataset}`` mapping.
    """
    if isinstance(resolution, str):
        resolution = Resolution.named(resolution)
    step = resolution.step if isinstance(resolution, Resolution) else float(resolution)
    topo, schema = get_cell(cell)
    X = grid_points(devices.vdd, step, schema.dim)
    volts = {node: X[:, k] for k, node in enumerate(schema.args)}
    out = {}
    for comp in schema.names:
        y = dc_component_value(topo, schema, comp, volts, devices)
        y = np.broadcast_to(np.asarray(y, dtype=float), (len(X),)).copy()
        out[comp] = CharDataset(cell, devices.corner, comp, schema.args, step,
                                devices.vdd, X.copy(), y)
    return out


def subsample(ds: CharDataset, n: int, seed: int) -> CharDataset:
    """Seeded uniform subset of ``n`` rows, kept in grid order."""
    if n < 1:
        raise SizeError("subsample needs at least one row")
    if n > ds.rows:
        raise SizeError(f"cannot draw {n} rows from a {ds.rows}-row dataset")
    idx = np.sort(np.random.default_rng(seed).choice(ds.rows, size=n, replace=False))
    return replace(ds, X=ds.X[idx].copy(), y=ds.y[idx].copy())


# ----------------------------------------------------------------------------
# dataset files


def format_dataset(ds: CharDataset) -> str:
    lines = [
        "# csmnn-dataset 1",
        f"# cell: {ds.cell}",
        f"# corner: {ds.corner}",
        f"# component: {ds.component}",
        f"# axes: {' '.join(ds.args)}",
        f"# step: {ds.step!r}",
        f"# vdd: {ds.vdd!r}",
        f"# rows: {ds.rows}",
    ]
    for xs, v in zip(ds.X, ds.y):
        lines.append(" ".join(f"{x:.6f}" for x in xs) + f" {v:.17e}")
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> CharDataset:
    head = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if ":" in line:
                k, v = line[1:].split(":", 1)
                head[k.strip()] = v.strip()
            continue
        try:
            rows.append([float(t) for t in line.split()])
        except ValueError:
            raise ParseError(f"bad dataset row {line!r}", lineno) from None
    try:
        args = tuple(head["axes"].split())
        arr = np.array(rows, dtype=float).reshape(-1, len(args) + 1)
        ds = CharDataset(head["cell"], head["corner"], head["component"], args,
                         float(head["step"]), float(head["vdd"]),
                         arr[:, :-1].copy(), arr[:, -1].copy())
    except KeyError as exc:
        raise ParseError(f"dataset header missing {exc}") from None
    if "rows" in head and int(head["rows"]) != ds.rows:
        raise ParseError(f"header says {head['rows']} rows, found {ds.rows}")
    return ds


def write_dataset(ds: CharDataset, path) -> Path:
    path = Path(path)
    path.write_text(format_dataset(ds))
    return path


def read_dataset(path) -> CharDataset:
    return parse_dataset(Path(path).read_text())


def dataset_filename(ds: CharDataset) -> str:
    return f"{ds.cell}_{ds.corner}_{ds.component}.dat"
