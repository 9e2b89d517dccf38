"""End-to-end flow for one (technology, corner): characterize, search, simulate, compare."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .cells import get_cell
from .charlib import Resolution, characterize, grid_axis
from .csmsim import probe_waveforms, ramp_stimulus, simulate
from .device import DeviceSet
from .lut import LutSet
from .netlist import full_adder, single_gate
from .refsim import flatten, transient
from .trainer import ESIM_TARGET, H_CANDIDATES, TrainConfig, nnset, search_hidden_size

LIBRARY = ("INV", "NAND2")
ADDER_OUTPUTS = ("sum", "cout")
DELAY_SLEW = 20e-12


def hold_level(cell: str, vdd: float) -> float:
    """Static level of the undriven pins that keeps the output sensitive."""
    return 0.0 if cell == "NOR2" else vdd


def bench_probes(cell: str, vdd: float, seed: int):
    """``cell`` driving one inverter, with the six probe stimuli."""
    topo, _ = get_cell(cell)
    level = hold_level(cell, vdd)
    return single_gate(cell, 1), probe_waveforms(vdd, seed, topo.inputs, {p: level for p in topo.inputs})


def adder_probes(vdd: float, seed: int):
    """Full adder with the probes on ``a`` while ``b = 1, cin = 0``."""
    return full_adder(), probe_waveforms(vdd, seed, ("a",), {"b": vdd, "cin": 0.0})


def reference(circuit, stimuli, devices: DeviceSet) -> list:
    fc = flatten(circuit)
    return [transient(fc, s, devices) for s in stimuli]


def worst_esim(refs, tests, vdd: float, nets) -> float:
    return max(analysis.e_sim(r[n], t[n], vdd) for r, t in zip(refs, tests) for n in nets)


def probe_esim(circuit, stimuli, refs, models: dict, vdd: float, nets=("y",)) -> float:
    return probe_runs(circuit, stimuli, refs, models, vdd, nets)[0]


def probe_runs(circuit, stimuli, refs, models: dict, vdd: float, nets=("y",)):
    """Worst E_sim over probes and ``nets``, plus the simulated waveforms."""
    tests = [simulate(circuit, s, models, vdd) for s in stimuli]
    return worst_esim(refs, tests, vdd, nets), tests


def delay_benches(cell: str, models: dict, devices: DeviceSet):
    """Rise and fall delay of ``cell`` (driving one inverter) against the reference.

    Every input pin is exercised once in each direction; returns ``SimMetric``s.
    """
    topo, _ = get_cell(cell)
    vdd = devices.vdd
    circuit = single_gate(cell, 1)
    fc = flatten(circuit)
    level = hold_level(cell, vdd)
    out = []
    for pin in topo.inputs:
        for rising in (True, False):
            st = ramp_stimulus(vdd, topo.inputs, pin, DELAY_SLEW, rising, {p: level for p in topo.inputs})
            ref = transient(fc, st, devices)
            test = simulate(circuit, st, models, vdd)
            out.append(analysis.compare(ref, test, vdd, inp=pin, out="y"))
    return out


@dataclass
class CornerRun:
    tech: str
    corner: str
    vdd: float
    resolution: str
    searches: dict = field(default_factory=dict)  # cell -> SearchResult
    lut_models: dict = field(default_factory=dict)
    adder_esim_nn: float = float("nan")
    adder_esim_lut: float = float("nan")
    delays: dict = field(default_factory=dict)  # cell -> [SimMetric]
    costs: dict = field(default_factory=dict)  # cell -> CostReport
    adder_waves: dict = field(default_factory=dict)  # "ref"|"nn"|"lut" -> [waves per probe]

    def nn_models(self) -> dict:
        return {c: nnset(c, s.models) for c, s in self.searches.items()}

    @property
    def hidden(self) -> dict:
        return {c: s.hidden for c, s in self.searches.items()}


def cost_reports(run: CornerRun, hw=None, steps: int = 1) -> dict:
    hw = hw or analysis.HwProfile()
    out = {}
    res = Resolution.named(run.resolution)
    pts = len(grid_axis(run.vdd, res.step))
    for cell, s in run.searches.items():
        _, schema = get_cell(cell)
        dims = [(schema.dim, s.models[n].H) for n in schema.names]
        info = analysis.BackendInfo.for_grid(cell, schema.dim, len(schema.names), pts, dims, hw.fp_bytes)
        gates = sum(1 for g in full_adder().gates if g.cell == cell) or 1
        out[cell] = analysis.cost_model(info, hw, steps, gates)
    return out


def run_corner(tech: str, corner: str, seed: int = 1, resolution: str = "N",
               cfg: TrainConfig = None, candidates=H_CANDIDATES, target: float = ESIM_TARGET,
               delays: bool = True, jobs: int = 1, log=None) -> CornerRun:
    log = log or (lambda msg: None)
    cfg = cfg or TrainConfig()
    if cfg.seed != seed:
        cfg = replace(cfg, lbfgs=replace(cfg.lbfgs, seed=seed))
    devices = DeviceSet.for_corner(tech, corner)
    vdd = devices.vdd
    run = CornerRun(tech, corner, vdd, Resolution.named(resolution).name)
    nn_lib = {}
    for cell in LIBRARY:
        log(f"characterize {cell}")
        data = characterize(cell, devices, resolution)
        run.lut_models[cell] = LutSet.from_datasets(data)
        circuit, stimuli = bench_probes(cell, vdd, seed)
        log(f"reference probes {cell}")
        refs = reference(circuit, stimuli, devices)

        def probe(cand, cell=cell, circuit=circuit, stimuli=stimuli, refs=refs):
            models = dict(nn_lib)
            models[cell] = cand
            models.setdefault("INV", run.lut_models["INV"])
            return probe_esim(circuit, stimuli, refs, models, vdd)

        log(f"search {cell}")
        run.searches[cell] = search_hidden_size(cell, data, probe, cfg, candidates, target, jobs)
        nn_lib[cell] = nnset(cell, run.searches[cell].models)
        log(f"{cell}: H={run.searches[cell].hidden} e_sim={run.searches[cell].e_sim:.4%}")

    circuit, stimuli = adder_probes(vdd, seed)
    log("reference full adder")
    refs = reference(circuit, stimuli, devices)
    run.adder_esim_nn, nn_w = probe_runs(circuit, stimuli, refs, nn_lib, vdd, ADDER_OUTPUTS)
    run.adder_esim_lut, lut_w = probe_runs(circuit, stimuli, refs, run.lut_models, vdd, ADDER_OUTPUTS)
    run.adder_waves = {"ref": refs, "nn": nn_w, "lut": lut_w}
    log(f"full adder e_sim nn={run.adder_esim_nn:.4%} lut={run.adder_esim_lut:.4%}")
    if delays:
        log("delay benches")
        for cell in LIBRARY:
            run.delays[cell] = delay_benches(cell, nn_lib, devices)
    run.costs = cost_reports(run, steps=stimuli[0].n_steps())
    return run


def max_delay_err(run: CornerRun) -> float:
    errs = [m.delay_err for ms in run.delays.values() for m in ms]
    return float(np.max(errs)) if errs else float("nan")
