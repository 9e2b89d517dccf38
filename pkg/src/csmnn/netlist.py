"""Gate-level circuit and PWL stimulus files.

Circuit format, one directive per line, ``#`` starts a comment::

    input a b cin
    output sum cout
    gate g1 NAND2 n1 a b

Stimulus format::

    stop 300p
    step 0.05p
    vdd 0.9
    pwl a (0 0) (20p 0) (40p 0.9)
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .cells import get_cell
from .errors import ParseError, SchemaError

_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3}
_NUM = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)([fpnumk]?)$")


def parse_value(tok: str) -> float:
    """Number with an optional SPICE scale suffix (``10p``, ``0.9``, ``1e-12``)."""
    m = _NUM.match(tok.strip())
    if not m:
        raise ValueError(f"bad number {tok!r}")
    return float(m.group(1)) * _SUFFIX.get(m.group(2), 1.0)


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


@dataclass(frozen=True)
class Gate:
    name: str
    cell: str
    output: str
    inputs: tuple


@dataclass
class Circuit:
    inputs: tuple
    outputs: tuple
    gates: tuple
    levels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.inputs = tuple(self.inputs)
        self.outputs = tuple(self.outputs)
        self.gates = tuple(self.gates)
        self.levels = levelize(self)

    @property
    def nets(self) -> tuple:
        return self.inputs + tuple(g.output for g in self.gates)

    @property
    def cell_types(self) -> tuple:
        return tuple(sorted({g.cell for g in self.gates}))

    def driver(self, net: str):
        for g in self.gates:
            if g.output == net:
                return g
        return None

    def fanout(self, net: str) -> list:
        """``(gate, pin index)`` pairs reading ``net``."""
        return [(g, k) for g in self.gates for k, n in enumerate(g.inputs) if n == net]

    def ordered(self) -> list:
        """Gates sorted by level, file order within a level."""
        pos = {g.name: i for i, g in enumerate(self.gates)}
        return sorted(self.gates, key=lambda g: (self.levels[g.name], pos[g.name]))


def levelize(c: Circuit, line_of=None) -> dict:
    """Level of every gate: 1 + max level of its drivers, primary inputs at 0."""
    line_of = line_of or {}
    drivers = {}
    for g in c.gates:
        if g.output in drivers or g.output in c.inputs:
            raise ParseError(f"net {g.output!r} has multiple drivers", line_of.get(g.name))
        drivers[g.output] = g
    for g in c.gates:
        for n in g.inputs:
            if n not in drivers and n not in c.inputs:
                raise ParseError(f"gate {g.name}: undeclared net {n!r}", line_of.get(g.name))
    for n in c.outputs:
        if n not in drivers and n not in c.inputs:
            raise ParseError(f"output {n!r} is not driven", None)

    level = {}
    state = {}

    def visit(g):
        if state.get(g.name) == 2:
            return level[g.name]
        if state.get(g.name) == 1:
            raise ParseError(f"combinational cycle through gate {g.name}", line_of.get(g.name))
        state[g.name] = 1
        lv = 0
        for n in g.inputs:
            if n in drivers:
                lv = max(lv, visit(drivers[n]))
        state[g.name] = 2
        level[g.name] = lv + 1
        return lv + 1

    for g in c.gates:
        visit(g)
    return level


def parse_circuit(text: str) -> Circuit:
    inputs, outputs, gates, line_of = [], [], [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        tok = line.split()
        kw = tok[0].lower()
        if kw == "input":
            inputs += tok[1:]
        elif kw == "output":
            outputs += tok[1:]
        elif kw == "gate":
            if len(tok) < 5:
                raise ParseError("gate needs a name, type, output and inputs", lineno)
            name, cell, out, ins = tok[1], tok[2].upper(), tok[3], tuple(tok[4:])
            try:
                topo, _ = get_cell(cell)
            except SchemaError as exc:
                raise ParseError(str(exc), lineno) from None
            if len(ins) != len(topo.inputs):
                raise ParseError(f"{cell} takes {len(topo.inputs)} inputs, got {len(ins)}", lineno)
            if name in line_of:
                raise ParseError(f"duplicate gate name {name!r}", lineno)
            line_of[name] = lineno
            gates.append(Gate(name, cell, out, ins))
        else:
            raise ParseError(f"unknown directive {tok[0]!r}", lineno)
    if len(set(inputs)) != len(inputs):
        raise ParseError("duplicate primary input")
    # validate with line numbers before constructing
    probe = Circuit.__new__(Circuit)
    probe.inputs, probe.outputs, probe.gates = tuple(inputs), tuple(outputs), tuple(gates)
    levelize(probe, line_of)
    return Circuit(inputs, outputs, gates)


def unparse_circuit(c: Circuit) -> str:
    lines = []
    if c.inputs:
        lines.append("input " + " ".join(c.inputs))
    if c.outputs:
        lines.append("output " + " ".join(c.outputs))
    for g in c.gates:
        lines.append(f"gate {g.name} {g.cell} {g.output} " + " ".join(g.inputs))
    return "\n".join(lines) + "\n"


FULL_ADDER = """\
# one-bit full adder from nine NAND2 gates
input a b cin
output sum cout
gate g1 NAND2 n1 a b
gate g2 NAND2 n2 a n1
gate g3 NAND2 n3 b n1
gate g4 NAND2 n4 n2 n3
gate g5 NAND2 n5 n4 cin
gate g6 NAND2 n6 n4 n5
gate g7 NAND2 n7 cin n5
gate g8 NAND2 sum n6 n7
gate g9 NAND2 cout n5 n1
"""


def full_adder() -> Circuit:
    return parse_circuit(FULL_ADDER)


def single_gate(cell: str, fanout_inv: int = 1) -> Circuit:
    """Test bench: one ``cell`` driving ``fanout_inv`` inverters."""
    topo, _ = get_cell(cell)
    ins = tuple(topo.inputs)
    gates = [Gate("dut", cell, "y", ins)]
    gates += [Gate(f"fo{k}", "INV", f"z{k}", ("y",)) for k in range(fanout_inv)]
    return Circuit(ins, ("y",), gates)


# ----------------------------------------------------------------------------
# stimulus


@dataclass
class Stimulus:
    waves: dict  # input -> (times, volts) arrays
    stop: float
    step: float
    vdd: float = 0.0  # 0 when the file does not state one

    def __post_init__(self):
        if not self.stop > 0 or not self.step > 0:
            raise ParseError("stop and step must be positive")
        for name, (t, v) in self.waves.items():
            t = np.asarray(t, dtype=float)
            v = np.asarray(v, dtype=float)
            if len(t) == 0 or len(t) != len(v):
                raise ParseError(f"pwl {name}: empty or ragged breakpoints")
            if np.any(np.diff(t) < 0):
                raise ParseError(f"pwl {name}: breakpoint times not sorted")
            if self.vdd > 0 and (v.min() < -0.2 * self.vdd or v.max() > 1.2 * self.vdd):
                raise ParseError(f"pwl {name}: voltage outside [-0.2, 1.2] x vdd")
            self.waves[name] = (t, v)

    def n_steps(self, step=None) -> int:
        return int(np.floor(self.stop / (step or self.step) + 1e-9))

    def times(self, step=None) -> np.ndarray:
        step = step or self.step
        return np.arange(self.n_steps(step) + 1) * step

    def sample(self, name: str, times) -> np.ndarray:
        t, v = self.waves[name]
        return np.interp(times, t, v)

    def covers(self, inputs) -> None:
        missing = [n for n in inputs if n not in self.waves]
        if missing:
            raise ParseError(f"stimulus has no waveform for {', '.join(missing)}")


_PAIR = re.compile(r"\(\s*([^\s()]+)\s+([^\s()]+)\s*\)")


def parse_stimulus(text: str) -> Stimulus:
    waves, stop, step, vdd = {}, None, None, 0.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        kw, _, rest = line.partition(" ")
        kw = kw.lower()
        try:
            if kw == "stop":
                stop = parse_value(rest)
            elif kw == "step":
                step = parse_value(rest)
            elif kw == "vdd":
                vdd = parse_value(rest)
            elif kw == "pwl":
                name, _, pts = rest.strip().partition(" ")
                pairs = _PAIR.findall(pts)
                if not name or not pairs or _PAIR.sub("", pts).strip():
                    raise ParseError("pwl needs an input name and (t v) pairs", lineno)
                if name in waves:
                    raise ParseError(f"duplicate pwl for {name!r}", lineno)
                t = [parse_value(a) for a, _ in pairs]
                if any(b < a for a, b in zip(t, t[1:])):
                    raise ParseError(f"pwl {name}: breakpoint times not sorted", lineno)
                waves[name] = (np.array(t), np.array([parse_value(b) for _, b in pairs]))
            else:
                raise ParseError(f"unknown directive {kw!r}", lineno)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if stop is None:
        raise ParseError("stimulus has no stop directive")
    if step is None:
        raise ParseError("stimulus has no step directive")
    return Stimulus(waves, stop, step, vdd)


def unparse_stimulus(s: Stimulus) -> str:
    lines = [f"stop {s.stop!r}", f"step {s.step!r}"]
    if s.vdd > 0:
        lines.append(f"vdd {s.vdd!r}")
    for name, (t, v) in s.waves.items():
        pts = " ".join(f"({float(a)!r} {float(b)!r})" for a, b in zip(t, v))
        lines.append(f"pwl {name} {pts}")
    return "\n".join(lines) + "\n"
