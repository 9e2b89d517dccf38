"""Time the compiled evaluation kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--calls N]

Both implementations are fed the same packed NAND2 tables (Normal grid) and
the same NAND2 networks (H=34), one query per call as the simulator issues
them. Outputs are checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from csmnn import _pykernels
from csmnn.charlib import characterize
from csmnn.device import DeviceSet
from csmnn.lut import LutSet
from csmnn.nn import NnSet, init_model

try:
    from csmnn import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def lut_args(ls: LutSet):
    return ls._values, ls._axes, ls._offsets, ls._lens


def nn_args(ns: NnSet):
    return (ns._W1, ns._W2, ns._in_shift, ns._in_scale, ns._out_shift,
            ns._out_scale, ns._y_min, ns._log)


def per_call(fn, args, points, out) -> float:
    t = time.perf_counter()
    for p in points:
        fn(*args, p, out)
    return (time.perf_counter() - t) / len(points)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=20000)
    ap.add_argument("--hidden", type=int, default=34)
    args = ap.parse_args()

    devices = DeviceSet.for_corner("MOS-HP", "TT")
    data = characterize("NAND2", devices, "N")
    luts = LutSet.from_datasets(data)
    rng = np.random.default_rng(0)
    nets = NnSet(list(data), [init_model(ds.X, ds.y, args.hidden, rng) for ds in data.values()])
    points = rng.uniform(0, devices.vdd, size=(args.calls, 4))
    out = np.empty(len(data))

    rows = []
    for name, fn_name, packed in (("lut", "lut_eval", lut_args(luts)), ("nn", "nn_eval", nn_args(nets))):
        impls = [("python", getattr(_pykernels, fn_name))]
        if _ckernels is not None:
            impls.append(("cython", getattr(_ckernels, fn_name)))
        ref = np.empty(len(data))
        getattr(_pykernels, fn_name)(*packed, points[0], ref)
        times = {}
        for label, fn in impls:
            fn(*packed, points[0], out)
            assert np.allclose(out, ref, rtol=1e-12, atol=1e-24), f"{label} {name} disagrees"
            times[label] = per_call(fn, packed, points, out)
        rows.append((name, times))

    print(f"{'kernel':8}{'python us/call':>16}{'cython us/call':>16}{'speedup':>10}")
    for name, t in rows:
        py = t["python"] * 1e6
        cy = t.get("cython", float("nan")) * 1e6
        print(f"{name:8}{py:16.2f}{cy:16.3f}{py / cy:10.1f}")


if __name__ == "__main__":
    main()
