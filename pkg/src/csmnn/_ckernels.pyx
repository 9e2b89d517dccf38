# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation kernels for the CSM simulator inner loop."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp

cnp.import_array()

DEF MAXDIM = 8


cdef inline Py_ssize_t _bracket(const double[::1] axes, Py_ssize_t off,
                                Py_ssize_t n, double x) nogil:
    cdef Py_ssize_t lo = 0, hi = n - 1, mid
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if axes[off + mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


def lut_eval(const double[:, ::1] values, const double[::1] axes,
             const cnp.int64_t[::1] offsets, const cnp.int64_t[::1] lens,
             const double[::1] point, double[::1] out):
    """Multilinear interpolation of every row of ``values`` at ``point``.

    ``values`` holds one flattened row-major table per component; all tables
    share the axes stored back to back in ``axes``.  Coordinates are clamped.
    """
    cdef Py_ssize_t D = lens.shape[0], ncomp = values.shape[0]
    cdef Py_ssize_t d, c, corner, flat, bit
    cdef Py_ssize_t idx[MAXDIM]
    cdef Py_ssize_t stride[MAXDIM]
    cdef double t[MAXDIM]
    cdef double x, lo, hi, w
    if D > MAXDIM or point.shape[0] != D:
        raise ValueError("dimension mismatch")
    with nogil:
        stride[D - 1] = 1
        for d in range(D - 2, -1, -1):
            stride[d] = stride[d + 1] * lens[d + 1]
        for d in range(D):
            lo = axes[offsets[d]]
            hi = axes[offsets[d] + lens[d] - 1]
            x = point[d]
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            idx[d] = _bracket(axes, offsets[d], lens[d], x)
            if idx[d] > lens[d] - 2:
                idx[d] = lens[d] - 2
            lo = axes[offsets[d] + idx[d]]
            hi = axes[offsets[d] + idx[d] + 1]
            t[d] = (x - lo) / (hi - lo)
        for c in range(ncomp):
            out[c] = 0.0
        for corner in range(1 << D):
            w = 1.0
            flat = 0
            for d in range(D):
                bit = (corner >> (D - 1 - d)) & 1
                if bit:
                    w = w * t[d]
                else:
                    w = w * (1.0 - t[d])
                flat = flat + (idx[d] + bit) * stride[d]
            if w == 0.0:
                continue
            for c in range(ncomp):
                out[c] = out[c] + w * values[c, flat]


def nn_eval(const double[:, :, ::1] W1, const double[:, ::1] W2,
            const double[:, ::1] in_shift, const double[:, ::1] in_scale,
            const double[::1] out_shift, const double[::1] out_scale,
            const double[::1] y_min, const cnp.int64_t[::1] log_flag,
            const double[::1] point, double[::1] out):
    """Single-hidden-layer tanh network forward pass for a stack of models."""
    cdef Py_ssize_t ncomp = W1.shape[0], H = W1.shape[1], D = W1.shape[2] - 1
    cdef Py_ssize_t c, h, d
    cdef double x[MAXDIM]
    cdef double g, y
    if D > MAXDIM or point.shape[0] != D:
        raise ValueError("dimension mismatch")
    with nogil:
        for c in range(ncomp):
            for d in range(D):
                x[d] = (point[d] - in_shift[c, d]) / in_scale[c, d]
            y = W2[c, 0]
            for h in range(H):
                g = W1[c, h, 0]
                for d in range(D):
                    g = g + W1[c, h, d + 1] * x[d]
                y = y + W2[c, h + 1] * tanh(g)
            y = y * out_scale[c] + out_shift[c]
            if log_flag[c]:
                y = exp(y) + y_min[c]
            out[c] = y
