"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``CSMNN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("CSMNN_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels as _impl
    COMPILED = True
except ImportError:
    _impl = _pykernels
    COMPILED = False

BACKEND = "cython" if COMPILED else "python"

lut_eval = _impl.lut_eval
nn_eval = _impl.nn_eval
