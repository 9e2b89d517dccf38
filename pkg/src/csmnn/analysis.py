"""Waveform accuracy metrics and the analytic LUT-vs-NN cost model."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MetricError
from .lut import size_bytes
from .nn import op_counts

TIERS = ("l1", "l2", "l3", "dram")


# ----------------------------------------------------------------------------
# waveform metrics


def _check_grid(a, b):
    if len(a) != len(b) or a.t0 != b.t0 or not np.isclose(a.dt, b.dt, rtol=1e-9, atol=0):
        raise MetricError("waveforms are sampled on different grids")
    if len(a) < 2:
        raise MetricError("waveforms need at least two samples")


def e_sim(ref, test, vdd: float) -> float:
    """Mean absolute difference over the horizon, as a fraction of vdd."""
    _check_grid(ref, test)
    if not vdd > 0:
        raise MetricError("vdd must be positive")
    diff = np.abs(ref.samples - test.samples)
    T = ref.dt * (len(ref) - 1)
    return float(np.trapezoid(diff, dx=ref.dt) / (T * vdd))


def crossings(w, level: float) -> np.ndarray:
    """Times at which ``w`` crosses ``level``, linearly interpolated."""
    s = w.samples - level
    below = s < 0
    k = np.flatnonzero(below[:-1] != below[1:])
    frac = s[k] / (s[k] - s[k + 1])
    return w.t0 + w.dt * (k + frac)


def prop_delay(inp, out, vdd: float, after: float = 0.0) -> float:
    """Delay from the first 50% crossing of ``inp`` (at or after ``after``) to
    the next 50% crossing of ``out``."""
    t_in = crossings(inp, vdd / 2)
    t_in = t_in[t_in >= after]
    if not len(t_in):
        raise MetricError("input never crosses vdd/2")
    t_out = crossings(out, vdd / 2)
    t_out = t_out[t_out >= t_in[0] - 1e-18]
    if not len(t_out):
        raise MetricError("output never crosses vdd/2 after the input does")
    return float(max(t_out[0] - t_in[0], 0.0))


@dataclass
class SimMetric:
    e_sim: float
    delay_ref: float = float("nan")
    delay_test: float = float("nan")

    def __post_init__(self):
        if self.e_sim < 0:
            raise MetricError("e_sim must be non-negative")

    @property
    def delay_err(self) -> float:
        if not self.delay_ref > 0:
            return float("nan")
        return abs(self.delay_test - self.delay_ref) / self.delay_ref


def compare(ref: dict, test: dict, vdd: float, inp: str = None, out: str = None) -> SimMetric:
    """E_sim on ``out`` (or the worst net) plus the ``inp -> out`` delay pair."""
    nets = [out] if out else sorted(set(ref) & set(test))
    e = max(e_sim(ref[n], test[n], vdd) for n in nets)
    if inp and out:
        return SimMetric(e, prop_delay(ref[inp], ref[out], vdd), prop_delay(test[inp], test[out], vdd))
    return SimMetric(e)


# ----------------------------------------------------------------------------
# hardware profile and cost model


@dataclass(frozen=True)
class HwProfile:
    l1_bytes: int = 32 * 1024
    l2_bytes: int = 256 * 1024
    l3_bytes: int = 20480 * 1024
    latency: dict = field(default_factory=lambda: {"l1": 5.0, "l2": 12.0, "l3": 42.0, "dram": 250.0})
    cpu_flops_per_cycle: float = 774.4 / (22 * 2.2)
    gpu_cores: int = 3584
    gpu_registers_per_core: int = 4 * 1024
    gpu_clock_ratio: float = 2.2 / 1.328  # CPU cycles per GPU cycle
    fp_bytes: int = 4
    # "dram": tables are streamed from main memory; "capacity": the smallest
    # cache level the cell's tables fit in
    lut_residency: str = "dram"

    def __post_init__(self):
        lat = [self.latency[t] for t in TIERS]
        if any(b <= a for a, b in zip(lat, lat[1:])):
            raise ConfigError("tier latencies must increase from l1 to dram")
        counts = (self.l1_bytes, self.l2_bytes, self.l3_bytes, self.cpu_flops_per_cycle,
                  self.gpu_cores, self.gpu_registers_per_core, self.gpu_clock_ratio, self.fp_bytes)
        if min(counts) <= 0 or min(lat) <= 0:
            raise ConfigError("hardware profile counts must be positive")
        if not self.l1_bytes < self.l2_bytes < self.l3_bytes:
            raise ConfigError("cache sizes must increase from l1 to l3")
        if self.lut_residency not in ("dram", "capacity"):
            raise ConfigError(f"unknown lut_residency {self.lut_residency!r}")

    def tier(self, nbytes: int) -> str:
        """Smallest level holding ``nbytes``."""
        for t, cap in (("l1", self.l1_bytes), ("l2", self.l2_bytes), ("l3", self.l3_bytes)):
            if nbytes <= cap:
                return t
        return "dram"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "HwProfile":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad hardware profile: {exc}") from None
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown hardware profile keys: {sorted(unknown)}")
        if "latency" in data:
            lat = dict(HwProfile().latency)
            lat.update(data["latency"])
            data["latency"] = lat
        return cls(**data)

    @classmethod
    def load(cls, path) -> "HwProfile":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class BackendInfo:
    """What the cost model needs to know about one cell's models."""

    cell: str
    components: int
    lut_bytes: int  # all component tables together
    nn_dims: tuple  # (D, H) per component

    @classmethod
    def for_grid(cls, cell: str, dim: int, components: int, points_per_dim: int,
                 nn_dims=(), fp_bytes: int = 4) -> "BackendInfo":
        return cls(cell, components, size_bytes(dim, components, points_per_dim, fp_bytes), tuple(nn_dims))


@dataclass
class CostReport:
    cell: str
    gates: int
    steps: int
    queries_per_step: int
    lut_tier: str
    lut_cycles_per_step: float
    cpu_cycles_per_step: float
    gpu_cycles_per_step: float
    flags: list = field(default_factory=list)

    @property
    def lut_total(self) -> float:
        return self.lut_cycles_per_step * self.steps

    @property
    def cpu_total(self) -> float:
        return self.cpu_cycles_per_step * self.steps

    @property
    def gpu_total(self) -> float:
        return self.gpu_cycles_per_step * self.steps

    @property
    def a_cpu(self) -> float:
        return self.lut_cycles_per_step / self.cpu_cycles_per_step

    @property
    def a_gpu(self) -> float:
        return self.lut_cycles_per_step / self.gpu_cycles_per_step

    @property
    def fits(self) -> bool:
        return not self.flags


def nn_param_bytes(D: int, H: int, fp_bytes: int = 4) -> int:
    return ((D + 1) * H + (H + 1)) * fp_bytes


def cost_model(info: BackendInfo, hw: HwProfile = HwProfile(), steps: int = 1, gates: int = 1) -> CostReport:
    """Cycles per simulation step for the LUT backend and the NN backend on
    CPU and GPU, for ``gates`` instances of one cell."""
    if steps < 1 or gates < 1:
        raise ConfigError("steps and gates must be >= 1")
    if len(info.nn_dims) != info.components:
        raise ConfigError("need one (D, H) pair per component")
    flags = []
    lut_tier = hw.tier(info.lut_bytes) if hw.lut_residency == "capacity" else "dram"
    lut = info.components * hw.latency[lut_tier]

    nn_bytes = sum(nn_param_bytes(D, H, hw.fp_bytes) for D, H in info.nn_dims)
    w_tier = hw.tier(nn_bytes)
    if w_tier != "l1":
        flags.append(f"NN weights ({nn_bytes} B) exceed L1; charged at {w_tier}")
    cpu = 0.0
    gpu = 0.0
    for D, H in info.nn_dims:
        muls, adds, depth = op_counts(D, H)
        cpu += hw.latency[w_tier] + (muls + adds) / hw.cpu_flops_per_cycle
        cores = (D + 1) * H
        waves = -(-cores // hw.gpu_cores)
        if waves > 1:
            flags.append(f"D={D}, H={H} needs {cores} cores; run in {waves} waves")
        g = depth * waves * hw.gpu_clock_ratio
        if nn_param_bytes(D, H, hw.fp_bytes) > hw.gpu_registers_per_core * min(cores, hw.gpu_cores):
            flags.append(f"D={D}, H={H} weights exceed the register budget")
            g += hw.latency["l2"]
        gpu += g
    return CostReport(info.cell, gates, steps, info.components * gates, lut_tier,
                      lut * gates, cpu * gates, gpu * gates, flags)
