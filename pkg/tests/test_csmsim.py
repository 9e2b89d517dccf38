import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csmnn import csmsim
from csmnn.analysis import e_sim
from csmnn.charlib import characterize, grid_points
from csmnn.csmsim import (
    GLITCH_AMP, GLITCH_WIDTH, PROBE_SLEWS, PROBE_START, Waveform, probe_names, probe_waveforms,
    ramp_stimulus, read_waveform, simulate, static_stimulus, write_waveforms,
)
from csmnn.errors import ConfigError, ParseError
from csmnn.lut import LutSet, LutTable
from csmnn.netlist import full_adder, parse_circuit, single_gate, unparse_stimulus
from csmnn.nn import forward
from csmnn.refsim import flatten, transient
from csmnn.trainer import TrainConfig, nnset, train_cell

INV1 = parse_circuit("input a\noutput y\ngate g1 INV y a\n")


@pytest.fixture(scope="module")
def libs(hp_tt):
    return {c: LutSet.from_datasets(characterize(c, hp_tt, "N")) for c in ("INV", "NAND2")}


def test_held_high_input_settles_low(libs, hp_tt):
    s = static_stimulus({"a": hp_tt.vdd}, 100e-12, 0.5e-12, hp_tt.vdd)
    w = simulate(INV1, s, libs, hp_tt.vdd)
    assert 0.0 <= w["y"].samples[-1] <= 1e-3
    assert np.abs(w["y"].samples).max() <= 1e-3


def test_inv_ramp_tracks_reference(libs, hp_tt):
    s = ramp_stimulus(hp_tt.vdd, slew=10e-12, stop=150e-12, step=0.5e-12)
    ref = transient(flatten(INV1), s, hp_tt)
    test = simulate(INV1, s, libs, hp_tt.vdd)
    assert e_sim(ref["y"], test["y"], hp_tt.vdd) < 0.02


@pytest.mark.parametrize("bits", list(itertools.product((0, 1), repeat=3)))
def test_full_adder_static_truth_table(libs, hp_tt, bits):
    vdd = hp_tt.vdd
    s = static_stimulus(dict(zip(("a", "b", "cin"), (vdd * b for b in bits))), 150e-12, 0.5e-12, vdd)
    w = simulate(full_adder(), s, libs, vdd, init="mid")
    total = sum(bits)
    assert abs(w["sum"].samples[-1] - vdd * (total % 2)) < 0.05 * vdd
    assert abs(w["cout"].samples[-1] - vdd * (total // 2)) < 0.05 * vdd


def test_probe_bytes_are_seed_determined(hp_tt):
    a = [unparse_stimulus(s) for s in probe_waveforms(0.7, 3)]
    b = [unparse_stimulus(s) for s in probe_waveforms(0.7, 3)]
    c = [unparse_stimulus(s) for s in probe_waveforms(0.7, 4)]
    assert a == b and a != c
    assert len(a) == 6 == len(probe_names())


@given(st.integers(0, 2**31), st.sampled_from([0.7, 0.805, 0.9]))
def test_probes_stay_in_band_and_glitch_area(seed, vdd):
    """Probe minus its clean ramp integrates to two triangles of width x amplitude / 2."""
    for k, s in enumerate(probe_waveforms(vdd, seed)):
        t, v = s.waves["a"]
        assert v.min() >= -0.2 * vdd and v.max() <= 1.2 * vdd
        assert v.min() >= 0.0 and v.max() <= vdd  # glitches point into the rails
        slew = PROBE_SLEWS[k // 2]
        clean = ramp_stimulus(vdd, slew=slew, rising=(k % 2 == 0))
        grid = np.linspace(0, s.stop, 60001)
        dev = np.abs(np.interp(grid, t, v) - clean.sample("a", grid))
        area = np.trapezoid(dev, grid)
        assert area == pytest.approx(2 * 0.5 * GLITCH_WIDTH * GLITCH_AMP * vdd, rel=1e-3)


def test_glitch_positions(hp_tt):
    for k, s in enumerate(probe_waveforms(0.7, 11)):
        t, v = s.waves["a"]
        rising = k % 2 == 0
        end = PROBE_START + PROBE_SLEWS[k // 2]
        pre = t < PROBE_START
        post = t > end + 1e-15
        c1 = t[pre][np.argmax(np.abs(v[pre] - (0.0 if rising else 0.7)))]
        c2 = t[post][np.argmax(np.abs(v[post] - (0.7 if rising else 0.0)))]
        assert 4e-12 - 1e-15 <= c1 <= PROBE_START - 4e-12 + 1e-15
        assert 10e-12 - 1e-15 <= c2 - end <= 60e-12 + 1e-15
        assert all(abs(c / 0.5e-12 - round(c / 0.5e-12)) < 1e-6 for c in (c1, c2))


def test_held_pins_are_static(hp_tt):
    probes = probe_waveforms(0.7, 1, ("a", "b"), {"b": 0.7, "cin": 0.0})
    driven = []
    for s in probes:
        assert set(s.waves) == {"a", "b", "cin"}
        assert tuple(s.waves["cin"][1]) == (0.0, 0.0)
        moving = [p for p, (_, v) in s.waves.items() if np.ptp(v) > 0]
        driven += moving
    assert driven == ["a", "b"] * 3


def nn_sampled_lut(models, vdd, step):
    """LUT whose table entries are the networks themselves on a fine grid."""
    names = models.names
    axis = np.round(np.arange(0, vdd + 1e-12, step), 12)
    axis[-1] = vdd
    X = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    tables = [LutTable((axis, axis), forward(m, X).reshape(len(axis), len(axis))) for m in models.models]
    return LutSet(names, tables)


def test_backends_agree_on_the_same_data(hp_tt):
    data = characterize("INV", hp_tt, "N")
    models, _ = train_cell(data, 10, TrainConfig())
    nn = nnset("INV", models)
    lut = nn_sampled_lut(nn, hp_tt.vdd, 0.01)
    s = ramp_stimulus(hp_tt.vdd, slew=20e-12, stop=150e-12, step=0.5e-12)
    c = single_gate("INV", 1)
    a = simulate(c, s, {"INV": nn}, hp_tt.vdd)
    b = simulate(c, s, {"INV": lut}, hp_tt.vdd)
    assert max(e_sim(a[n], b[n], hp_tt.vdd) for n in ("y", "z0")) <= 0.005


def test_dt_refinement(libs, hp_tt):
    c = single_gate("INV", 1)
    s = ramp_stimulus(hp_tt.vdd, slew=20e-12, stop=150e-12, step=0.5e-12)
    ref = transient(flatten(c), s, hp_tt)
    e1 = e_sim(ref["y"], simulate(c, s, libs, hp_tt.vdd)["y"], hp_tt.vdd)
    e2 = e_sim(ref["y"], simulate(c, s, libs, hp_tt.vdd, dt=csmsim.DEFAULT_DT / 2)["y"], hp_tt.vdd)
    assert abs(e1 - e2) < 0.001


@pytest.mark.parametrize("rising", [True, False])
@pytest.mark.parametrize("slew", PROBE_SLEWS)
def test_monotone_settling(libs, hp_tt, rising, slew):
    vdd = hp_tt.vdd
    s = ramp_stimulus(vdd, slew=slew, rising=rising, stop=200e-12, step=0.5e-12)
    y = simulate(INV1, s, libs, vdd)["y"].samples
    start = 1.0 * vdd if rising else 0.0
    # Miller bump goes the wrong way first, by at most 0.15 vdd
    bump = (y.max() - start) if rising else (start - y.min())
    assert bump <= 0.15 * vdd
    k = int(np.argmax(y)) if rising else int(np.argmin(y))
    tail = np.diff(y[k:])
    assert np.all(tail <= 1e-9) if rising else np.all(tail >= -1e-9)


def test_determinism(libs, hp_tt):
    s = probe_waveforms(hp_tt.vdd, 1, ("a", "b"), {"b": hp_tt.vdd}, step=0.5e-12)[1]
    c = single_gate("NAND2", 1)
    a = simulate(c, s, libs, hp_tt.vdd)
    b = simulate(c, s, libs, hp_tt.vdd)
    assert all(a[n].samples.tobytes() == b[n].samples.tobytes() for n in a)


def test_internal_nodes_and_errors(libs, hp_tt):
    c = single_gate("NAND2", 1)
    s = static_stimulus({"a": 0.7, "b": 0.7}, 20e-12, 0.5e-12)
    w = simulate(c, s, libs, 0.7, internal=True)
    assert "dut.n" in w
    with pytest.raises(ConfigError):
        simulate(c, s, {"INV": libs["INV"]}, 0.7)
    with pytest.raises(ConfigError):
        simulate(c, s, libs, 0.7, init="random")
    with pytest.raises(ParseError):
        simulate(c, static_stimulus({"a": 0.7}, 20e-12, 0.5e-12), libs, 0.7)
    with pytest.raises(ConfigError):
        simulate(c, static_stimulus({"a": 0.7, "b": 0.7}, 20e-12, 0.33e-12), libs, 0.7)


def test_waveform_csv_round_trip(tmp_path):
    w = Waveform(0.0, 0.5e-12, np.linspace(0, 0.7, 11))
    write_waveforms({"y": w}, tmp_path)
    assert (tmp_path / "y.csv").read_text().splitlines()[0] == "time_s,volts"
    back = read_waveform(tmp_path / "y.csv")
    assert back.dt == pytest.approx(w.dt) and len(back) == 11
    np.testing.assert_allclose(back.samples, w.samples, atol=1e-9)
