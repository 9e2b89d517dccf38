"""Gate-level transient simulation driven by CSM components."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cells import LOGIC, get_cell
from .errors import ConfigError, SimulationError
from .netlist import Circuit, Stimulus

DEFAULT_DT = 0.05e-12
V_MARGIN = 0.1
MAX_HALVINGS = 8
JUMP_LIMIT = 0.2  # fraction of vdd allowed per step before the step is halved
EDGE_PROBE = 0.02  # fraction of vdd used for the secant past the box edge
CAP_FLOOR = 0.5  # continued capacitances stay above this fraction of the edge value

PROBE_SLEWS = (5e-12, 20e-12, 80e-12)
PROBE_START = 20e-12
PROBE_STOP = 300e-12
GLITCH_AMP = 0.15  # fraction of vdd
GLITCH_WIDTH = 5e-12


@dataclass
class Waveform:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def stop(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)


def write_waveforms(waves: dict, out_dir) -> list:
    """One ``<net>.csv`` per waveform with ``time_s,volts`` rows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for net in sorted(waves):
        w = waves[net]
        lines = ["time_s,volts"]
        lines += [f"{t:.6e},{v:.9f}" for t, v in zip(w.times, w.samples)]
        p = out_dir / f"{net}.csv"
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    return paths


def read_waveform(path) -> Waveform:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    dt = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
    return Waveform(float(t[0]), float(dt), v)


# ----------------------------------------------------------------------------
# initial state


def logic_state(circuit: Circuit, levels_in: dict, vdd: float) -> dict:
    """Rail voltages of every net for static boolean inputs."""
    val = {n: bool(levels_in[n]) for n in circuit.inputs}
    for g in circuit.ordered():
        val[g.output] = bool(LOGIC[g.cell](*(val[n] for n in g.inputs)))
    return {n: vdd if b else 0.0 for n, b in val.items()}


def _internal_init(cell: str, vdd: float) -> float:
    # NAND2's stack node sits near ground, NOR2's near the supply
    return vdd if cell == "NOR2" else 0.0


# ----------------------------------------------------------------------------
# the simulator


class _Plan:
    """Index bookkeeping shared by every timestep."""

    def __init__(self, circuit: Circuit, models: dict):
        self.circuit = circuit
        self.nets = list(circuit.nets)
        self.net_idx = {n: i for i, n in enumerate(self.nets)}
        self.node_names = list(self.nets)
        self.gates = circuit.ordered()
        self.recs = []
        for g in self.gates:
            if g.cell not in models:
                raise ConfigError(f"no CSM models for cell {g.cell}")
            topo, schema = get_cell(g.cell)
            cset = models[g.cell]
            where = {n: k for k, n in enumerate(cset.names)}
            missing = [n for n in schema.names if n not in where]
            if missing:
                raise ConfigError(f"{g.cell} models lack components {missing}")
            pin = dict(zip(topo.inputs, g.inputs))
            internal = []
            for n in topo.internal:
                internal.append(len(self.node_names))
                self.node_names.append(f"{g.name}.{n}")
            node_of = {p: self.net_idx[net] for p, net in pin.items()}
            node_of[topo.output] = self.net_idx[g.output]
            node_of.update(zip(topo.internal, internal))
            self.recs.append(dict(
                gate=g,
                cset=cset,
                q=np.array([node_of[a] for a in schema.args], dtype=np.intp),
                ins=[self.net_idx[n] for n in g.inputs],
                out=self.net_idx[g.output],
                cm=[where[f"C_M{p}"] for p in topo.inputs],
                ci=[where[f"C_i{p}"] for p in topo.inputs],
                co=where["C_o"],
                io=where["I_o"],
                internal=[(node, where[f"C_{n}"], where[f"I_{n}"])
                          for node, n in zip(internal, topo.internal)],
                buf=np.zeros(len(cset.names)),
                buf2=np.zeros(len(cset.names)),
                edge=np.zeros(len(cset.names)),
                caps=np.array([k for k, n in enumerate(cset.names) if n.startswith("C_")], dtype=np.intp),
                # query position of each node the gate integrates -> its own current
                own={list(schema.args).index(n): where["I_o" if n == topo.output else f"I_{n}"]
                     for n in (topo.output,) + topo.internal},
            ))
        rec_of = {r["gate"].name: r for r in self.recs}
        # fanout load: (fanout record, pin) pairs per driving gate
        for r in self.recs:
            r["fanout"] = [(rec_of[g.name], k) for g, k in circuit.fanout(r["gate"].output)]
        self.inputs = [self.net_idx[n] for n in circuit.inputs]


def _run(plan: _Plan, stimulus: Stimulus, vdd: float, dt: float, init: str):
    times = stimulus.times(dt)
    nsteps = len(times) - 1
    in_vals = np.array([stimulus.sample(n, times) for n in plan.circuit.inputs])
    nn = len(plan.node_names)
    V = np.zeros(nn)
    if init == "logic":
        start = logic_state(plan.circuit, {n: in_vals[k, 0] > vdd / 2
                                           for k, n in enumerate(plan.circuit.inputs)}, vdd)
        for n, v in start.items():
            V[plan.net_idx[n]] = v
        for r in plan.recs:
            for node, _, _ in r["internal"]:
                V[node] = _internal_init(r["gate"].cell, vdd)
    elif init == "mid":
        V[:] = vdd / 2
    else:
        raise ConfigError(f"unknown initial state {init!r}")
    V[plan.inputs] = in_vals[:, 0]

    hist = np.empty((nsteps + 1, nn))
    hist[0] = V
    slope = np.zeros(nn)
    lo, hi = -V_MARGIN, vdd + V_MARGIN
    jump = JUMP_LIMIT * vdd
    recs = plan.recs
    for r in recs:
        _evaluate(r, V, vdd)

    for s in range(nsteps):
        Vn = V.copy()
        Vn[plan.inputs] = in_vals[:, s + 1]
        new_slope = np.zeros(nn)
        new_slope[plan.inputs] = (in_vals[:, s + 1] - in_vals[:, s]) / dt
        for r in recs:
            buf = r["buf"]
            _evaluate(r, V, vdd)
            ctot = buf[r["co"]]
            rhs = buf[r["io"]]
            for i_net, k in zip(r["ins"], r["cm"]):
                cm = buf[k]
                ctot += cm
                rhs += cm * new_slope[i_net]
            for fr, pin in r["fanout"]:
                fbuf = fr["buf"]
                cm_fo = fbuf[fr["cm"][pin]]
                ctot += fbuf[fr["ci"][pin]] + cm_fo
                rhs += cm_fo * slope[fr["out"]]
            o = r["out"]
            dv = dt * rhs / ctot
            if abs(dv) > jump:
                raise _Unstable(times[s], r["gate"].name)
            vo = min(max(V[o] + dv, lo), hi)
            Vn[o] = vo
            new_slope[o] = (vo - V[o]) / dt
            for node, kc, ki in r["internal"]:
                dv = dt * buf[ki] / buf[kc]
                if abs(dv) > jump:
                    raise _Unstable(times[s], plan.node_names[node])
                Vn[node] = min(max(V[node] + dv, lo), hi)
        V = Vn
        slope = new_slope
        hist[s + 1] = V
    return hist


def _evaluate(r, V, vdd):
    """Components at node voltages clamped to the characterized box.

    Past a rail, capacitances are continued linearly (edge secant) along
    every axis, and the gate's own node currents along their own node axis.
    Currents are not continued across axes: a fitted current that points
    outward at a box face would otherwise drag every other node with it.
    """
    v = V[r["q"]]
    q = np.clip(v, 0.0, vdd)
    buf = r["buf"]
    r["cset"].evaluate(q, buf)
    excess = v - q
    if not excess.any():
        return
    edge, buf2, caps, own = r["edge"], r["buf2"], r["caps"], r["own"]
    edge[:] = buf
    for pos in np.flatnonzero(excess):
        step = np.copysign(EDGE_PROBE * vdd, excess[pos])
        q2 = q.copy()
        q2[pos] -= step
        r["cset"].evaluate(q2, buf2)
        scale = excess[pos] / step
        buf[caps] += (edge[caps] - buf2[caps]) * scale
        k = own.get(pos)
        if k is not None:
            buf[k] += (edge[k] - buf2[k]) * scale
    buf[caps] = np.maximum(buf[caps], CAP_FLOOR * edge[caps])


class _Unstable(Exception):
    def __init__(self, t, where):
        self.t, self.where = t, where


def simulate(circuit: Circuit, stimulus: Stimulus, models: dict, vdd: float,
             dt: float = DEFAULT_DT, init: str = "logic", internal: bool = False) -> dict:
    """Transient of every net under ``stimulus`` with per-cell component sets.

    ``models`` maps cell type to a component set (``LutSet`` or ``NnSet``);
    the backend is whatever the sets evaluate with. Returns ``{net: Waveform}``
    on the stimulus grid; ``internal=True`` also returns stack nodes.
    """
    stimulus.covers(circuit.inputs)
    if not dt > 0:
        raise ConfigError("dt must be positive")
    plan = _Plan(circuit, models)
    base = stimulus.step
    sub = dt
    for attempt in range(MAX_HALVINGS + 1):
        try:
            hist = _run(plan, stimulus, vdd, sub, init)
            break
        except _Unstable as exc:
            if attempt == MAX_HALVINGS:
                raise SimulationError(
                    f"unstable integration at {exc.t:.4g} s on {exc.where} "
                    f"after {MAX_HALVINGS} timestep halvings"
                ) from None
            sub /= 2
    stride = base / sub
    k = int(round(stride))
    if k < 1 or abs(stride - k) > 1e-6:
        raise ConfigError("stimulus step must be a multiple of the integration step")
    hist = hist[::k]
    names = plan.node_names if internal else plan.nets
    return {n: Waveform(0.0, base, hist[:, i].copy()) for i, n in enumerate(names)}


# ----------------------------------------------------------------------------
# probe stimuli


def _glitch(t_center, amp):
    w = GLITCH_WIDTH / 2
    return [(t_center - w, 0.0), (t_center, amp), (t_center + w, 0.0)]


def probe_waveforms(vdd: float, seed: int, inputs=("a",), held=None,
                    step: float = DEFAULT_DT, stop: float = PROBE_STOP) -> list:
    """Six noisy saturated ramps (rise and fall at three slews).

    Each probe drives one pin of ``inputs``, cycling through them; pins not
    driven sit at ``held[pin]`` (default vdd), and extra ``held`` pins are
    added as static waveforms. Every probe carries two
    triangular glitches in its flat stretches, pointing into the rail band.
    """
    rng = np.random.default_rng(seed)
    held = dict(held or {})
    grid = 0.5e-12
    out = []
    k = 0
    for slew in PROBE_SLEWS:
        for rising in (True, False):
            v0, v1 = (0.0, vdd) if rising else (vdd, 0.0)
            t_end = PROBE_START + slew
            c1 = rng.uniform(4e-12, PROBE_START - 4e-12)
            c2 = rng.uniform(t_end + 10e-12, t_end + 60e-12)
            c1, c2 = (round(c / grid) * grid for c in (c1, c2))
            a1 = GLITCH_AMP * vdd * (1 if rising else -1)
            pts = [(0.0, v0)]
            pts += [(t, v0 + dv) for t, dv in _glitch(c1, a1)]
            pts += [(PROBE_START, v0), (t_end, v1)]
            pts += [(t, v1 - dv) for t, dv in _glitch(c2, a1)]
            pts.append((stop, v1))
            pin = inputs[k % len(inputs)]
            pins = list(inputs) + [p for p in held if p not in inputs]
            waves = {p: (np.array([0.0, stop]), np.full(2, held.get(p, vdd)))
                     for p in pins if p != pin}
            waves[pin] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
            out.append(Stimulus({p: waves[p] for p in pins}, stop, step, vdd))
            k += 1
    return out


def probe_names() -> list:
    return [f"{'rise' if r else 'fall'}_{int(s * 1e12)}p" for s in PROBE_SLEWS for r in (True, False)]


def ramp_stimulus(vdd: float, inputs=("a",), drive="a", slew=20e-12, rising=True,
                  held=None, start=PROBE_START, stop=PROBE_STOP, step=DEFAULT_DT) -> Stimulus:
    """Single clean saturated ramp on ``drive``; other pins static."""
    held = dict(held or {})
    v0, v1 = (0.0, vdd) if rising else (vdd, 0.0)
    waves = {}
    for p in inputs:
        if p == drive:
            waves[p] = (np.array([0.0, start, start + slew, stop]), np.array([v0, v0, v1, v1]))
        else:
            waves[p] = (np.array([0.0, stop]), np.full(2, held.get(p, vdd)))
    return Stimulus(waves, stop, step, vdd)


def static_stimulus(levels: dict, stop: float, step: float = DEFAULT_DT, vdd: float = 0.0) -> Stimulus:
    waves = {p: (np.array([0.0, stop]), np.full(2, float(v))) for p, v in levels.items()}
    return Stimulus(waves, stop, step, vdd)
