"""CSM-NN backend: one-hidden-layer tanh regressors, loss, gradients, op counts."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import NumericInputError, ParseError, QueryError, TransformError

DEFAULT_L2 = 1e-6
LOG_MARGIN_FRAC = 1e-3


@dataclass(frozen=True)
class NnModel:
    """Weights plus the input/output transforms needed to evaluate a component.

    ``W1`` is ``H x (D+1)`` with the bias in column 0; ``W2`` has ``H+1``
    entries with the bias first.
    """

    W1: np.ndarray
    W2: np.ndarray
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: float = 0.0
    out_scale: float = 1.0
    log: bool = False
    y_min: float = 0.0
    activation: str = "tanh"

    def __post_init__(self):
        H, D1 = self.W1.shape
        if self.W2.shape != (H + 1,):
            raise ValueError("W2 must have H+1 entries")
        if len(self.in_shift) != D1 - 1 or len(self.in_scale) != D1 - 1:
            raise ValueError("normalization arrays must have D entries")
        if np.any(np.asarray(self.in_scale) <= 0) or self.out_scale <= 0:
            raise ValueError("normalization scales must be positive")
        if not (np.all(np.isfinite(self.W1)) and np.all(np.isfinite(self.W2))):
            raise NumericInputError("non-finite weights")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def D(self) -> int:
        return self.W1.shape[1] - 1

    @property
    def H(self) -> int:
        return self.W1.shape[0]

    @property
    def n_params(self) -> int:
        return self.W1.size + self.W2.size

    def weights(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.W2])

    def with_weights(self, w) -> "NnModel":
        w = np.asarray(w, dtype=float)
        n1 = self.W1.size
        return replace(self, W1=w[:n1].reshape(self.W1.shape).copy(), W2=w[n1:].copy())


def plain_model(W1, W2) -> NnModel:
    """Model with identity input normalization and no output transform."""
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    D = W1.shape[1] - 1
    return NnModel(W1, np.asarray(W2, dtype=float), np.zeros(D), np.ones(D))


def init_model(X, y, H: int, rng, log: bool = False) -> NnModel:
    """Fit normalizations to training data and draw Glorot-uniform weights."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    D = X.shape[1]
    in_shift = X.mean(axis=0)
    in_scale = X.std(axis=0)
    in_scale = np.where(in_scale > 0, in_scale, 1.0)
    y_min = 0.0
    if log:
        span = float(y.max() - y.min())
        margin = LOG_MARGIN_FRAC * (span if span > 0 else max(abs(float(y.min())), 1e-30))
        y_min = float(y.min()) - margin
        t = np.log(y - y_min)
    else:
        t = y
    out_shift = float(t.mean())
    out_scale = float(t.std())
    lim1 = np.sqrt(6.0 / (D + H))
    lim2 = np.sqrt(6.0 / (H + 1))
    W1 = np.zeros((H, D + 1))
    W1[:, 1:] = rng.uniform(-lim1, lim1, size=(H, D))
    W2 = np.zeros(H + 1)
    W2[1:] = rng.uniform(-lim2, lim2, size=H)
    if not out_scale > 0:
        # constant target: start (and stay) exactly on it
        out_scale = abs(out_shift) or 1.0
        W2[1:] = 0.0
    return NnModel(W1, W2, in_shift, in_scale, out_shift, out_scale, log, y_min)


def forward(m: NnModel, v):
    """Evaluate the model at one point (shape ``(D,)``) or a batch ``(n, D)``."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    if V.shape[1] != m.D:
        raise QueryError(f"query has dimension {V.shape[1]}, model has {m.D}")
    x = (V - m.in_shift) / m.in_scale
    a = np.tanh(x @ m.W1[:, 1:].T + m.W1[:, 0])
    y = a @ m.W2[1:] + m.W2[0]
    y = y * m.out_scale + m.out_shift
    if m.log:
        y = np.exp(y) + m.y_min
    if not np.all(np.isfinite(y)):
        raise NumericInputError("network produced a non-finite value")
    return float(y[0]) if single else y


def transform_targets(m: NnModel, y) -> np.ndarray:
    """Map raw targets into the normalized space the loss is measured in."""
    y = np.asarray(y, dtype=float)
    if m.log:
        shifted = y - m.y_min
        if np.any(shifted <= 0):
            raise TransformError("target at or below y_min cannot be log-transformed")
        y = np.log(shifted)
    return (y - m.out_shift) / m.out_scale


def objective(m: NnModel, X, y, l2: float = DEFAULT_L2):
    """Closure ``w -> (loss, grad)`` over a fixed batch, for the optimizer."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("empty batch")
    if X.shape[1] != m.D:
        raise QueryError(f"batch has dimension {X.shape[1]}, model has {m.D}")
    z = transform_targets(m, y)
    N = len(X)
    Xb = np.empty((N, m.D + 1))
    Xb[:, 0] = 1.0
    Xb[:, 1:] = (X - m.in_shift) / m.in_scale
    H, D1 = m.W1.shape
    n1 = H * D1

    def f(w):
        W1 = w[:n1].reshape(H, D1)
        W2 = w[n1:]
        A = np.tanh(Xb @ W1.T)
        r = A @ W2[1:] + W2[0] - z
        loss = float(r @ r) / N + l2 * float(w @ w)
        dy = (2.0 / N) * r
        grad = np.empty_like(w)
        grad[n1] = dy.sum()
        grad[n1 + 1:] = dy @ A
        dG = np.outer(dy, W2[1:]) * (1.0 - A * A)
        grad[:n1] = (dG.T @ Xb).ravel()
        grad += 2.0 * l2 * w
        return loss, grad

    return f


def loss_and_grad(m: NnModel, X, y, l2: float = DEFAULT_L2):
    """Mean squared error in transformed space plus ``l2 * |w|^2``, and its gradient."""
    return objective(m, X, y, l2)(m.weights())


def op_counts(D: int, H: int):
    """Multiplications, additions and tree-reduction depth of one forward pass."""
    if D < 1 or H < 1:
        raise ValueError("D and H must be >= 1")
    muls = (D + 1) * H
    adds = (D + 1) * H
    latency = (D - 1).bit_length() + (H - 1).bit_length()
    return muls, adds, latency


def param_bytes(m, fp_bytes: int = 4) -> int:
    """Storage for all weights; ``m`` is a model or a ``(D, H)`` pair."""
    D, H = (m.D, m.H) if isinstance(m, NnModel) else m
    return ((D + 1) * H + (H + 1)) * fp_bytes


# ----------------------------------------------------------------------------
# model files


def _fmt(xs) -> str:
    return " ".join(f"{float(x):.17g}" for x in np.atleast_1d(xs))


def format_model(m: NnModel) -> str:
    lines = [
        "csmnn-model 1",
        f"D {m.D}",
        f"H {m.H}",
        f"activation {m.activation}",
        f"in_shift {_fmt(m.in_shift)}",
        f"in_scale {_fmt(m.in_scale)}",
        f"log {int(m.log)}",
        f"y_min {_fmt(m.y_min)}",
        f"out_shift {_fmt(m.out_shift)}",
        f"out_scale {_fmt(m.out_scale)}",
        "W1",
    ]
    lines += [_fmt(row) for row in m.W1]
    lines += ["W2", _fmt(m.W2)]
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> NnModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "csmnn-model 1":
        raise ParseError("not a csmnn model file", 1)
    kv = {}
    i = 1
    while i < len(lines) and lines[i] != "W1":
        key, _, rest = lines[i].partition(" ")
        kv[key] = rest
        i += 1
    try:
        D, H = int(kv["D"]), int(kv["H"])
        W1 = np.array([[float(t) for t in lines[i + 1 + h].split()] for h in range(H)])
        if lines[i + 1 + H] != "W2":
            raise ParseError("expected W2 block", i + 2 + H)
        W2 = np.array([float(t) for t in lines[i + 2 + H].split()])
        floats = lambda k: np.array([float(t) for t in kv[k].split()])  # noqa: E731
        m = NnModel(
            W1.reshape(H, D + 1), W2, floats("in_shift"), floats("in_scale"),
            float(kv["out_shift"]), float(kv["out_scale"]), bool(int(kv["log"])),
            float(kv["y_min"]), kv.get("activation", "tanh"),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(f"malformed model file: {exc}") from None
    return m


def write_model(m: NnModel, path) -> Path:
    path = Path(path)
    path.write_text(format_model(m))
    return path


def read_model(path) -> NnModel:
    return parse_model(Path(path).read_text())


@dataclass
class NnSet:
    """All component networks of one cell packed for the compiled kernel."""

    names: tuple
    models: tuple
    kind: str = field(default="nn", init=False)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.models = tuple(self.models)
        D = self.models[0].D
        if any(m.D != D for m in self.models):
            raise QueryError("all component networks of a cell need the same D")
        self.dim = D
        Hmax = max(m.H for m in self.models)
        n = len(self.models)
        # narrower networks are zero-padded; padded units contribute tanh(0)*0
        self._W1 = np.zeros((n, Hmax, D + 1))
        self._W2 = np.zeros((n, Hmax + 1))
        for c, m in enumerate(self.models):
            self._W1[c, : m.H] = m.W1
            self._W2[c, : m.H + 1] = m.W2
        self._in_shift = np.ascontiguousarray([m.in_shift for m in self.models], dtype=float)
        self._in_scale = np.ascontiguousarray([m.in_scale for m in self.models], dtype=float)
        self._out_shift = np.array([m.out_shift for m in self.models], dtype=float)
        self._out_scale = np.array([m.out_scale for m in self.models], dtype=float)
        self._y_min = np.array([m.y_min for m in self.models], dtype=float)
        self._log = np.array([int(m.log) for m in self.models], dtype=np.int64)

    def evaluate(self, v, out=None):
        if out is None:
            out = np.empty(len(self.models))
        kernels.nn_eval(self._W1, self._W2, self._in_shift, self._in_scale,
                        self._out_shift, self._out_scale, self._y_min, self._log, v, out)
        return out
