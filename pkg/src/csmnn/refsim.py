"""Transistor-level reference transient: backward Euler with Newton on nodal KCL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GND, NODE_FLOOR_CAP, VDD, get_cell
from .csmsim import DEFAULT_DT, Waveform, _internal_init, logic_state
from .device import DeviceSet, ids_derivs, junction_cap, terminal_caps
from .errors import ConfigError, SimulationError
from .netlist import Circuit, Stimulus

NEWTON_TOL = 1e-12  # A
NEWTON_MAX_ITER = 40
MAX_HALVINGS = 8
MAX_NEWTON_STEP = 0.2  # fraction of vdd per iteration


@dataclass
class FlatCircuit:
    """Every transistor of every instance on one node list.

    Node 0 is ground, node 1 the supply; then primary inputs, then the
    free nodes (gate outputs and ``<instance>.<node>`` stack nodes).
    """

    nodes: list
    inputs: list  # indices of driven nodes
    free: list  # indices of unknown nodes
    polarity: np.ndarray  # "N"/"P" per device
    gate: np.ndarray
    drain: np.ndarray
    source: np.ndarray
    c_min: float = NODE_FLOOR_CAP
    circuit: Circuit = None

    @property
    def n_devices(self) -> int:
        return len(self.gate)


def flatten(circuit: Circuit) -> FlatCircuit:
    nodes = [GND, VDD] + list(circuit.inputs)
    idx = {n: i for i, n in enumerate(nodes)}
    inputs = list(range(2, len(nodes)))
    for g in circuit.gates:
        if g.output not in idx:
            idx[g.output] = len(nodes)
            nodes.append(g.output)
    pol, gt, dr, sr = [], [], [], []
    for g in circuit.gates:
        topo, _ = get_cell(g.cell)
        local = {GND: 0, VDD: 1, topo.output: idx[g.output]}
        local.update({p: idx[n] for p, n in zip(topo.inputs, g.inputs)})
        for n in topo.internal:
            name = f"{g.name}.{n}"
            idx[name] = len(nodes)
            nodes.append(name)
            local[n] = idx[name]
        for d in topo.devices:
            pol.append(d.polarity)
            gt.append(local[d.gate])
            dr.append(local[d.drain])
            sr.append(local[d.source])
    free = list(range(2 + len(circuit.inputs), len(nodes)))
    return FlatCircuit(nodes, inputs, free, np.array(pol, dtype="U1"), np.array(gt, dtype=np.intp),
                       np.array(dr, dtype=np.intp), np.array(sr, dtype=np.intp), circuit=circuit)


class _Devices:
    """Vectorized evaluation of all devices of one polarity group at once."""

    def __init__(self, fc: FlatCircuit, devices: DeviceSet):
        n = len(fc.nodes)
        self.groups = []
        for pol in ("N", "P"):
            sel = np.flatnonzero(fc.polarity == pol)
            if not len(sel):
                continue
            g, d, s = fc.gate[sel], fc.drain[sel], fc.source[sel]
            self.groups.append(dict(
                card=devices.card(pol), pol=pol, g=g, d=d, s=s,
                # flat Jacobian slots: rows (d, s) x cols (g, d, s)
                jac=np.concatenate([r * n + c for r in (d, s) for c in (g, d, s)]),
                # flat capacitance slots of a two-terminal cap between a and b
                cgs=np.concatenate([g * n + g, s * n + s, g * n + s, s * n + g]),
                cgd=np.concatenate([g * n + g, d * n + d, g * n + d, d * n + g]),
                junc=np.concatenate([d * n + d, s * n + s]),
            ))
        self.vdd = devices.vdd
        self.n = n

    def currents(self, V):
        """Net current into every node and its Jacobian ``dI/dV``."""
        n = self.n
        I = np.zeros(n)
        J = np.zeros(n * n)
        for grp in self.groups:
            g, d, s = grp["g"], grp["d"], grp["s"]
            i, gm, gds = ids_derivs(grp["card"], V[g] - V[s], V[d] - V[s])
            I += np.bincount(s, i, n) - np.bincount(d, i, n)
            gs = -(gm + gds)
            w = np.concatenate([-gm, -gds, -gs, gm, gds, gs])
            J += np.bincount(grp["jac"], w, n * n)
        return I, J.reshape(n, n)

    def cap_matrix(self, V, c_min):
        n = self.n
        C = np.zeros(n * n)
        for grp in self.groups:
            p, g, d, s = grp["card"], grp["g"], grp["d"], grp["s"]
            cgs, cgd = terminal_caps(p, V[g] - V[s], V[d] - V[s])
            C += np.bincount(grp["cgs"], np.concatenate([cgs, cgs, -cgs, -cgs]), n * n)
            C += np.bincount(grp["cgd"], np.concatenate([cgd, cgd, -cgd, -cgd]), n * n)
            vt = V[np.concatenate([d, s])]
            v_rev = vt if grp["pol"] == "N" else self.vdd - vt
            C += np.bincount(grp["junc"], junction_cap(p, v_rev), n * n)
        C = C.reshape(n, n)
        C[np.arange(2, n), np.arange(2, n)] += c_min
        return C


def _initial(fc: FlatCircuit, stimulus: Stimulus, vdd: float, init: str):
    V = np.zeros(len(fc.nodes))
    V[1] = vdd
    c = fc.circuit
    v_in = {n: float(stimulus.sample(n, [0.0])[0]) for n in c.inputs}
    if init == "logic":
        start = logic_state(c, {n: v > vdd / 2 for n, v in v_in.items()}, vdd)
        for k, n in enumerate(fc.nodes):
            if n in start:
                V[k] = start[n]
        for g in c.gates:
            topo, _ = get_cell(g.cell)
            for n in topo.internal:
                V[fc.nodes.index(f"{g.name}.{n}")] = _internal_init(g.cell, vdd)
    elif init == "mid":
        V[2:] = vdd / 2
    else:
        raise ConfigError(f"unknown initial state {init!r}")
    for k, n in enumerate(c.inputs):
        V[2 + k] = v_in[n]
    return V


def _newton_step(devs, fc, V0, V1_known, h, C):
    """Solve for free-node voltages at t+h; returns the full vector or None."""
    f = np.asarray(fc.free)
    k = np.concatenate([[0, 1], np.asarray(fc.inputs, dtype=np.intp)]).astype(np.intp)
    V = V0.copy()
    V[k] = V1_known[k]
    dVk = V1_known[k] - V0[k]
    Cff = C[np.ix_(f, f)]
    drive = C[np.ix_(f, k)] @ dVk / h
    limit = MAX_NEWTON_STEP * devs.vdd
    for _ in range(NEWTON_MAX_ITER):
        I, J = devs.currents(V)
        R = Cff @ (V[f] - V0[f]) / h + drive - I[f]
        if np.max(np.abs(R)) < NEWTON_TOL:
            return V, R
        Jf = Cff / h - J[np.ix_(f, f)]
        try:
            delta = np.linalg.solve(Jf, -R)
        except np.linalg.LinAlgError:
            return None, R
        big = np.max(np.abs(delta))
        if big > limit:
            delta *= limit / big
        V[f] += delta
    I, _ = devs.currents(V)
    R = Cff @ (V[f] - V0[f]) / h + drive - I[f]
    return (V, R) if np.max(np.abs(R)) < NEWTON_TOL else (None, R)


def transient(fc: FlatCircuit, stimulus: Stimulus, devices: DeviceSet,
              dt: float = DEFAULT_DT, init: str = "logic", nodes: str = "nets") -> dict:
    """Node waveforms on the stimulus grid.

    Capacitances are evaluated at the start of each step and held through
    the Newton solve. ``nodes="all"`` also returns stack nodes.
    """
    c = fc.circuit
    stimulus.covers(c.inputs)
    vdd = devices.vdd
    devs = _Devices(fc, devices)
    times = stimulus.times(dt)
    in_vals = np.array([stimulus.sample(n, times) for n in c.inputs]).reshape(len(c.inputs), -1)
    V = _initial(fc, stimulus, vdd, init)
    hist = np.empty((len(times), len(fc.nodes)))
    hist[0] = V
    for s in range(len(times) - 1):
        t0, t1 = times[s], times[s + 1]
        # sub-stepping only when the full step fails to converge
        t = t0
        h = t1 - t0
        halvings = 0
        while t < t1 - 1e-6 * (t1 - t0):
            h = min(h, t1 - t)
            target = V.copy()
            frac = (t + h - t0) / (t1 - t0)
            target[2:2 + len(c.inputs)] = in_vals[:, s] + frac * (in_vals[:, s + 1] - in_vals[:, s])
            C = devs.cap_matrix(V, fc.c_min)
            V_new, R = _newton_step(devs, fc, V, target, h, C)
            if V_new is None:
                halvings += 1
                if halvings > MAX_HALVINGS:
                    worst = fc.nodes[fc.free[int(np.argmax(np.abs(R)))]]
                    raise SimulationError(
                        f"Newton failed to converge at node {worst}, t = {t:.4g} s"
                    )
                h /= 2
                continue
            assert np.max(np.abs(R)) < NEWTON_TOL
            V = V_new
            t += h
        hist[s + 1] = V
    if nodes == "all":
        keep = range(2, len(fc.nodes))
    else:
        keep = [k for k in range(2, len(fc.nodes)) if "." not in fc.nodes[k]]
    step = stimulus.step
    k = int(round(step / dt))
    if k < 1 or abs(step / dt - k) > 1e-6:
        raise ConfigError("stimulus step must be a multiple of the integration step")
    return {fc.nodes[i]: Waveform(0.0, step, hist[::k, i].copy()) for i in keep}
