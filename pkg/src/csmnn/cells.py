"""Transistor topologies of the library cells and their CSM component schemas."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .device import DeviceSet, ids, junction_cap, terminal_caps
from .errors import SchemaError

GND = "gnd"
VDD = "vdd"
RAILS = (GND, VDD)

# lumped ground capacitance present on every non-rail node (F)
NODE_FLOOR_CAP = 0.01e-15


@dataclass(frozen=True)
class DeviceSpec:
    polarity: str
    gate: str
    drain: str
    source: str


@dataclass(frozen=True)
class CellTopology:
    name: str
    inputs: tuple
    internal: tuple
    output: str
    devices: tuple

    @property
    def nodes(self) -> tuple:
        return self.inputs + self.internal + (self.output,)

    def __post_init__(self):
        known = set(self.nodes) | set(RAILS)
        for d in self.devices:
            for term in (d.gate, d.drain, d.source):
                if term not in known:
                    raise SchemaError(f"{self.name}: undeclared node {term!r}")


@dataclass(frozen=True)
class Component:
    name: str
    kind: str  # "current" | "capacitance"
    node: str  # node the component drives or loads
    coupled: str = ""  # far terminal of a Miller capacitance

    @property
    def is_current(self) -> bool:
        return self.kind == "current"


@dataclass(frozen=True)
class ComponentSchema:
    cell: str
    args: tuple  # query argument nodes; len(args) is the LUT/NN dimension
    components: tuple

    @property
    def dim(self) -> int:
        return len(self.args)

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.components)

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise SchemaError(f"{self.cell} has no component {name!r}")

    def index(self, name: str) -> int:
        return self.names.index(self.component(name).name)


def _schema(topo: CellTopology) -> ComponentSchema:
    y = topo.output
    comps = [Component(f"C_M{i}", "capacitance", y, i) for i in topo.inputs]
    comps += [Component(f"C_i{i}", "capacitance", i) for i in topo.inputs]
    comps.append(Component("C_o", "capacitance", y))
    comps += [Component(f"C_{n}", "capacitance", n) for n in topo.internal]
    comps.append(Component("I_o", "current", y))
    comps += [Component(f"I_{n}", "current", n) for n in topo.internal]
    return ComponentSchema(topo.name, topo.inputs + (y,) + topo.internal, tuple(comps))


INV = CellTopology(
    "INV", ("a",), (), "y",
    (DeviceSpec("P", "a", "y", VDD), DeviceSpec("N", "a", "y", GND)),
)
NAND2 = CellTopology(
    "NAND2", ("a", "b"), ("n",), "y",
    (
        DeviceSpec("P", "a", "y", VDD),
        DeviceSpec("P", "b", "y", VDD),
        DeviceSpec("N", "a", "y", "n"),
        DeviceSpec("N", "b", "n", GND),
    ),
)
NOR2 = CellTopology(
    "NOR2", ("a", "b"), ("n",), "y",
    (
        DeviceSpec("P", "a", "n", VDD),
        DeviceSpec("P", "b", "y", "n"),
        DeviceSpec("N", "a", "y", GND),
        DeviceSpec("N", "b", "y", GND),
    ),
)

_LIBRARY = {t.name: (t, _schema(t)) for t in (INV, NAND2, NOR2)}

# boolean functions, used for initial conditions and truth-table checks
LOGIC = {
    "INV": lambda a: not a,
    "NAND2": lambda a, b: not (a and b),
    "NOR2": lambda a, b: not (a or b),
}


def library_cells() -> list:
    """All supported cells as ``(CellTopology, ComponentSchema)`` pairs."""
    return list(_LIBRARY.values())


def get_cell(name: str):
    try:
        return _LIBRARY[name]
    except KeyError:
        raise SchemaError(f"unknown cell type {name!r}") from None


def _voltage(node, node_voltages, vdd):
    if node == GND:
        return 0.0
    if node == VDD:
        return vdd
    return np.asarray(node_voltages[node], dtype=float)


def _node_current(topo, node, v, devs):
    total = 0.0
    for d in topo.devices:
        if node not in (d.drain, d.source):
            continue
        vg, vd, vs = (_voltage(x, v, devs.vdd) for x in (d.gate, d.drain, d.source))
        i = ids(devs.card(d.polarity), vg - vs, vd - vs)
        total = total + (-i if d.drain == node else i)
    return total


def _gate_caps(d, v, devs):
    vg, vd, vs = (_voltage(x, v, devs.vdd) for x in (d.gate, d.drain, d.source))
    return terminal_caps(devs.card(d.polarity), vg - vs, vd - vs)


def _junction(d, node, v, devs):
    vn = _voltage(node, v, devs.vdd)
    v_rev = vn if d.polarity == "N" else devs.vdd - vn
    return junction_cap(devs.card(d.polarity), v_rev)


def dc_component_value(topo: CellTopology, schema: ComponentSchema, component: str,
                       node_voltages: Mapping, devices: DeviceSet):
    """Evaluate one CSM component at the given node voltages.

    Currents are the net device current flowing into the attached node.
    Capacitances sum the device terminal contributions of the attached pair;
    gate-to-internal-node caps are lumped into both ``C_i*`` and ``C_n``.
    """
    comp = schema.component(component)
    v = node_voltages
    if comp.is_current:
        return _node_current(topo, comp.node, v, devices)

    total = 0.0
    y = topo.output
    if comp.coupled:  # Miller: gate `coupled` <-> output
        for d in topo.devices:
            if d.gate != comp.coupled:
                continue
            cgs, cgd = _gate_caps(d, v, devices)
            if d.drain == y:
                total = total + cgd
            if d.source == y:
                total = total + cgs
        return total

    if comp.node in topo.inputs:
        for d in topo.devices:
            if d.gate != comp.node:
                continue
            cgs, cgd = _gate_caps(d, v, devices)
            if d.drain != y:
                total = total + cgd
            if d.source != y:
                total = total + cgs
        return total

    node = comp.node
    for d in topo.devices:
        for term, is_drain in ((d.drain, True), (d.source, False)):
            if term != node:
                continue
            total = total + _junction(d, node, v, devices)
            if node in topo.internal:
                cgs, cgd = _gate_caps(d, v, devices)
                total = total + (cgd if is_drain else cgs)
    return total + NODE_FLOOR_CAP
