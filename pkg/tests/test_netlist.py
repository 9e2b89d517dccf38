import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csmnn.csmsim import logic_state, probe_waveforms
from csmnn.errors import ParseError
from csmnn.netlist import (
    FULL_ADDER, Circuit, Gate, Stimulus, full_adder, parse_circuit, parse_stimulus, parse_value,
    single_gate, unparse_circuit, unparse_stimulus,
)


def test_single_inverter():
    c = parse_circuit("input a\noutput y\ngate g1 INV y a\n")
    assert c.inputs == ("a",) and c.outputs == ("y",) and len(c.gates) == 1
    assert c.levels == {"g1": 1}


def test_full_adder_shape_and_truth_table():
    c = full_adder()
    assert len(c.gates) == 9 and c.cell_types == ("NAND2",)
    assert c.inputs == ("a", "b", "cin") and c.outputs == ("sum", "cout")
    for a, b, ci in itertools.product((0, 1), repeat=3):
        s = logic_state(c, {"a": a, "b": b, "cin": ci}, 1.0)
        assert (s["sum"], s["cout"]) == ((a + b + ci) % 2, (a + b + ci) // 2)


def test_self_loop_is_a_cycle():
    with pytest.raises(ParseError, match="cycle"):
        parse_circuit("output a\ngate g1 INV a a\n")


def test_parse_errors_carry_lines():
    with pytest.raises(ParseError, match="line 3"):
        parse_circuit("input a\noutput y\ngate g1 INV y a b\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_circuit("input a\ngate g1 FOO y a\n")
    with pytest.raises(ParseError, match="multiple drivers"):
        parse_circuit("input a\ngate g1 INV y a\ngate g2 INV y a\n")
    with pytest.raises(ParseError, match="undeclared"):
        parse_circuit("input a\ngate g1 INV y q\n")
    with pytest.raises(ParseError, match="not driven"):
        parse_circuit("input a\noutput z\ngate g1 INV y a\n")
    with pytest.raises(ParseError, match="unknown directive"):
        parse_circuit("wire a\n")


def test_comments_and_case():
    c = parse_circuit("# header\ninput a  # the input\noutput y\ngate g1 inv y a\n")
    assert c.gates[0].cell == "INV"


def test_values():
    assert parse_value("10p") == pytest.approx(10e-12)
    assert parse_value("0.9") == 0.9
    assert parse_value("3f") == pytest.approx(3e-15)
    with pytest.raises(ValueError):
        parse_value("1x")


@st.composite
def circuits(draw):
    n_in = draw(st.integers(1, 4))
    inputs = [f"i{k}" for k in range(n_in)]
    nets = list(inputs)
    gates = []
    for k in range(draw(st.integers(0, 12))):
        cell = draw(st.sampled_from(["INV", "NAND2", "NOR2"]))
        ins = tuple(draw(st.sampled_from(nets)) for _ in range(1 if cell == "INV" else 2))
        gates.append(Gate(f"g{k}", cell, f"n{k}", ins))
        nets.append(f"n{k}")
    outputs = draw(st.lists(st.sampled_from(nets), max_size=3, unique=True))
    # shuffle the gate order: levelization, not file order, decides evaluation
    order = draw(st.permutations(range(len(gates))))
    return Circuit(inputs, outputs, [gates[i] for i in order])


@given(circuits())
def test_circuit_round_trip(c):
    back = parse_circuit(unparse_circuit(c))
    assert back == c
    assert back.levels == c.levels


@given(circuits())
def test_levels_are_topological(c):
    for g in c.gates:
        for n in g.inputs:
            d = c.driver(n)
            assert d is None and n in c.inputs or c.levels[d.name] < c.levels[g.name]
    ordered = c.ordered()
    seen = set(c.inputs)
    for g in ordered:
        assert all(n in seen for n in g.inputs)
        seen.add(g.output)


def test_fanout_and_bench():
    c = single_gate("NAND2", 2)
    assert [g.name for g, _ in c.fanout("y")] == ["fo0", "fo1"]
    assert c.driver("y").cell == "NAND2"


def test_ramp_stimulus_parse():
    s = parse_stimulus("stop 100p\nstep 0.05p\npwl a (0 0) (10p 0.9)\n")
    t, v = s.waves["a"]
    assert len(t) == 2 and t[1] == pytest.approx(10e-12) and v[1] == 0.9
    assert s.sample("a", [5e-12])[0] == pytest.approx(0.45)


def test_stimulus_errors():
    with pytest.raises(ParseError, match="stop"):
        parse_stimulus("step 1p\npwl a (0 0)\n")
    with pytest.raises(ParseError, match="step"):
        parse_stimulus("stop 1p\n")
    with pytest.raises(ParseError, match="sorted"):
        parse_stimulus("stop 1p\nstep 1p\npwl a (1p 0) (0 1)\n")
    with pytest.raises(ParseError, match="duplicate"):
        parse_stimulus("stop 1p\nstep 1p\npwl a (0 0)\npwl a (0 0)\n")
    with pytest.raises(ParseError, match="outside"):
        parse_stimulus("stop 1p\nstep 1p\nvdd 0.7\npwl a (0 0) (1p 1.5)\n")
    with pytest.raises(ParseError):
        Stimulus({}, 0.0, 1e-12)


@pytest.mark.parametrize("seed", [1, 7])
def test_probe_round_trip(seed):
    for s in probe_waveforms(0.9, seed, ("a", "b"), {"b": 0.9}):
        text = unparse_stimulus(s)
        back = parse_stimulus(text)
        assert unparse_stimulus(back) == text
        for name, (t, v) in s.waves.items():
            np.testing.assert_array_equal(back.waves[name][0], t)
            np.testing.assert_array_equal(back.waves[name][1], v)
