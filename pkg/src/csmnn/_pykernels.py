"""Pure numpy implementations of the evaluation kernels.

Signatures match the compiled ``_ckernels`` module exactly.
"""
import numpy as np


def lut_eval(values, axes, offsets, lens, point, out):
    D = len(lens)
    if len(point) != D:
        raise ValueError("dimension mismatch")
    idx = np.empty(D, dtype=np.int64)
    t = np.empty(D)
    for d in range(D):
        ax = axes[offsets[d]:offsets[d] + lens[d]]
        x = min(max(point[d], ax[0]), ax[-1])
        i = min(int(np.searchsorted(ax, x, side="right")) - 1, lens[d] - 2)
        idx[d] = i
        t[d] = (x - ax[i]) / (ax[i + 1] - ax[i])
    # gather the 2**D enclosing corners from every component table at once
    bits = (np.arange(1 << D)[:, None] >> np.arange(D - 1, -1, -1)) & 1
    w = np.prod(np.where(bits == 1, t, 1.0 - t), axis=1)
    strides = np.ones(D, dtype=np.int64)
    for d in range(D - 2, -1, -1):
        strides[d] = strides[d + 1] * lens[d + 1]
    flat = (idx + bits) @ strides
    out[:] = values[:, flat] @ w


def nn_eval(W1, W2, in_shift, in_scale, out_shift, out_scale, y_min, log_flag,
            point, out):
    D = W1.shape[2] - 1
    if len(point) != D:
        raise ValueError("dimension mismatch")
    x = (np.asarray(point) - in_shift) / in_scale
    g = W1[:, :, 0] + np.einsum("chd,cd->ch", W1[:, :, 1:], x)
    y = W2[:, 0] + np.einsum("ch,ch->c", W2[:, 1:], np.tanh(g))
    y = y * out_scale + out_shift
    out[:] = np.where(log_flag != 0, np.exp(np.where(log_flag != 0, y, 0.0)) + y_min, y)
