import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from csmnn.analysis import (
    BackendInfo, HwProfile, SimMetric, compare, cost_model, crossings, e_sim, nn_param_bytes, prop_delay,
)
from csmnn.charlib import Resolution, grid_axis
from csmnn.csmsim import Waveform
from csmnn.errors import ConfigError, MetricError

DT = 0.5e-12
samples = arrays(np.float64, 41, elements=st.floats(-1, 2, allow_nan=False))


def wave(v, t0=0.0, dt=DT):
    return Waveform(t0, dt, np.asarray(v, float))


def ramp(t_mid, n=401, vdd=0.7, width=20e-12, rising=True):
    t = np.arange(n) * DT
    v = np.clip((t - t_mid) / width + 0.5, 0, 1) * vdd
    return wave(v if rising else vdd - v)


def test_identical_is_zero():
    w = ramp(50e-12)
    assert e_sim(w, w, 0.7) == 0.0


def test_constant_offset():
    w = ramp(50e-12)
    assert e_sim(w, wave(w.samples + 0.035), 0.7) == pytest.approx(0.05, rel=1e-12)


def test_triangle_glitch_area():
    # vertices on the grid, so the trapezoid rule is exact
    n, vdd, amp = 201, 0.8, 0.12
    t = np.arange(n) * DT
    tri = np.maximum(0, amp * (1 - np.abs(t - 40e-12) / 2.5e-12))
    T = (n - 1) * DT
    assert e_sim(wave(np.zeros(n)), wave(tri), vdd) == pytest.approx(0.5 * 5e-12 * amp / (T * vdd), rel=1e-12)


@given(samples, samples, samples)
def test_triangle_inequality(a, b, c):
    A, B, C = wave(a), wave(b), wave(c)
    assert e_sim(A, C, 1.0) <= e_sim(A, B, 1.0) + e_sim(B, C, 1.0) + 1e-12


@given(samples, samples, st.floats(0.1, 10))
def test_scale_and_symmetry(a, b, k):
    A, B = wave(a), wave(b)
    assert e_sim(A, B, 1.0) == pytest.approx(e_sim(B, A, 1.0), abs=1e-15)
    assert e_sim(wave(k * a), wave(k * b), k) == pytest.approx(e_sim(A, B, 1.0), rel=1e-9, abs=1e-12)


def test_grid_mismatch():
    with pytest.raises(MetricError):
        e_sim(wave(np.zeros(10)), wave(np.zeros(11)), 0.7)
    with pytest.raises(MetricError):
        e_sim(wave(np.zeros(10)), wave(np.zeros(10), dt=1e-12), 0.7)
    with pytest.raises(MetricError):
        e_sim(wave(np.zeros(10)), wave(np.zeros(10), t0=1e-12), 0.7)
    with pytest.raises(MetricError):
        e_sim(wave([0.0]), wave([0.0]), 0.7)
    with pytest.raises(MetricError):
        e_sim(wave(np.zeros(3)), wave(np.zeros(3)), 0.0)


def test_crossings_interpolate():
    w = wave([0.0, 0.2, 0.6, 0.7])
    assert crossings(w, 0.35) == pytest.approx([DT * (1 + 0.15 / 0.4)])


def test_shifted_delay():
    a = ramp(50e-12)
    b = ramp(57e-12, rising=False)
    assert prop_delay(a, b, 0.7) == pytest.approx(7e-12, rel=1e-9)


def test_mirror_has_zero_delay():
    a = ramp(50e-12)
    assert prop_delay(a, ramp(50e-12, rising=False), 0.7) == pytest.approx(0.0, abs=1e-20)


def test_delay_errors():
    flat = wave(np.zeros(50))
    with pytest.raises(MetricError):
        prop_delay(flat, ramp(10e-12, n=50), 0.7)
    with pytest.raises(MetricError):
        prop_delay(ramp(10e-12, n=50), flat, 0.7)
    # output switches before the input: no later output crossing
    with pytest.raises(MetricError):
        prop_delay(ramp(60e-12, n=200), ramp(20e-12, n=200), 0.7)


def test_compare_and_metric():
    ref = {"a": ramp(50e-12), "y": ramp(60e-12, rising=False)}
    test = {"a": ref["a"], "y": ramp(63e-12, rising=False)}
    m = compare(ref, test, 0.7, "a", "y")
    assert m.delay_err == pytest.approx(0.3, rel=1e-9)
    assert compare(ref, ref, 0.7).e_sim == 0.0
    assert np.isnan(SimMetric(0.1).delay_err)
    with pytest.raises(MetricError):
        SimMetric(-0.1)


# ----------------------------------------------------------------------------
# cost model


def nand2_info(pts, H=34, fp=4):
    return BackendInfo.for_grid("NAND2", 4, 8, pts, [(4, H)] * 8, fp)


def test_table_sizes_pick_cache_tiers():
    hw = HwProfile()
    pts = len(grid_axis(0.9, Resolution.named("N").step))
    info = nand2_info(pts)
    assert info.lut_bytes == 8 * pts**4 * 4
    assert hw.tier(info.lut_bytes) == "l3"
    assert hw.tier(nand2_info(10).lut_bytes) == "l3"  # 320 KB, just past L2
    assert hw.tier(BackendInfo.for_grid("AOI", 6, 12, 10, [], 4).lut_bytes) == "dram"  # 48 MB
    assert hw.tier(BackendInfo.for_grid("INV", 2, 4, 20, [], 1).lut_bytes) == "l1"  # 1.6 KB
    cap = cost_model(info, HwProfile(lut_residency="capacity"))
    assert cap.lut_tier == "l3" and cap.lut_cycles_per_step == 8 * 42.0
    assert cost_model(info).lut_tier == "dram"


def test_cost_oracle():
    # by hand: 8 components x 250 cycles against one NN pass per component
    hw = HwProfile()
    rep = cost_model(nand2_info(10, H=10), hw, steps=100, gates=2)
    muls = adds = 5 * 10
    cpu = 8 * (hw.latency["l1"] + (muls + adds) / hw.cpu_flops_per_cycle) * 2
    gpu = 8 * (2 + 4) * hw.gpu_clock_ratio * 2
    assert rep.lut_cycles_per_step == 8 * 250 * 2
    assert rep.cpu_cycles_per_step == pytest.approx(cpu)
    assert rep.gpu_cycles_per_step == pytest.approx(gpu)
    assert rep.lut_total == pytest.approx(100 * rep.lut_cycles_per_step)
    assert rep.queries_per_step == 16 and rep.fits


@given(st.integers(2, 40), st.integers(2, 40), st.sampled_from(["dram", "capacity"]))
def test_lut_cost_monotone_in_bytes(p1, p2, residency):
    hw = HwProfile(lut_residency=residency)
    lo, hi = sorted((p1, p2))
    assert cost_model(nand2_info(lo), hw).lut_cycles_per_step <= cost_model(nand2_info(hi), hw).lut_cycles_per_step


@given(st.integers(1, 200), st.integers(1, 200))
def test_nn_cost_monotone_in_hidden(h1, h2):
    lo, hi = sorted((h1, h2))
    a, b = cost_model(nand2_info(10, lo)), cost_model(nand2_info(10, hi))
    assert a.cpu_cycles_per_step <= b.cpu_cycles_per_step
    assert a.gpu_cycles_per_step <= b.gpu_cycles_per_step


@given(st.integers(10, 120), st.integers(2, 40))
def test_gpu_never_slower_than_cpu(H, pts):
    # trainable sizes start at 10; below that one L1 access plus a handful
    # of flops can beat a depth-5 tree once the clock ratio is applied
    rep = cost_model(nand2_info(pts, H))
    assert rep.fits
    assert rep.a_gpu >= rep.a_cpu >= 1


def test_tiny_network_counterexample():
    rep = cost_model(nand2_info(10, H=5))
    assert rep.a_gpu < rep.a_cpu


def test_large_networks_are_flagged():
    rep = cost_model(nand2_info(10, H=2000))
    assert not rep.fits and any("L1" in f for f in rep.flags)
    assert nn_param_bytes(4, 10) == (5 * 10 + 11) * 4


def test_hw_profile_json(tmp_path):
    hw = HwProfile(l3_bytes=8 * 2**20, latency={"l1": 4.0, "l2": 14.0, "l3": 40.0, "dram": 200.0})
    p = tmp_path / "hw.json"
    p.write_text(hw.to_json())
    assert HwProfile.load(p) == hw
    assert HwProfile.from_json('{"latency": {"dram": 300}}').latency["l1"] == 5.0


@pytest.mark.parametrize("bad", [
    '{"latency": {"l2": 3}}', '{"l1_bytes": 0}', '{"l2_bytes": 10}', '{"lut_residency": "disk"}',
    '{"foo": 1}', "not json",
])
def test_hw_profile_validation(bad):
    with pytest.raises(ConfigError):
        HwProfile.from_json(bad)


def test_cost_argument_checks():
    with pytest.raises(ConfigError):
        cost_model(nand2_info(10), steps=0)
    with pytest.raises(ConfigError):
        cost_model(BackendInfo.for_grid("NAND2", 4, 8, 10, [(4, 10)], 4))
