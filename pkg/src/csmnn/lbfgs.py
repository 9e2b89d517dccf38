"""Limited-memory BFGS with a strong-Wolfe line search."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericInputError

F_NOISE = 1e-13  # relative size of objective differences treated as rounding


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iter: int = 500
    grad_tol: float = 1e-7
    c1: float = 1e-4
    c2: float = 0.9
    seed: int = 0
    max_ls: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ConfigError("L-BFGS memory must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigError("line search constants need 0 < c1 < c2 < 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    status: str  # "converged" | "max_iter" | "line_search_failed"
    history: list = field(default_factory=list)
    n_evals: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "converged"


class _LineSearchFailed(Exception):
    pass


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimizer of the cubic through two points with slopes, or None."""
    if a0 == a1:
        return None
    e1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = e1 * e1 - d0 * d1
    if disc < 0:
        return None
    e2 = np.copysign(np.sqrt(disc), a1 - a0)
    den = d1 - d0 + 2.0 * e2
    if den == 0:
        return None
    a = a1 - (a1 - a0) * (d1 + e2 - e1) / den
    return a if np.isfinite(a) else None


def _wolfe_search(fun, x, f0, g0, d, alpha, c1, c2, max_ls):
    """Strong-Wolfe step length by bracketing then zooming with cubic steps."""
    dphi0 = float(g0 @ d)
    evals = 0
    # f differences below this are rounding noise; the slope decides instead
    ftol = F_NOISE * max(abs(f0), 1e-300)

    def phi(a):
        nonlocal evals
        evals += 1
        fa, ga = fun(x + a * d)
        return float(fa), ga, float(ga @ d) if np.all(np.isfinite(ga)) else np.nan

    def zoom(lo, hi):
        a_lo, f_lo, g_lo, dp_lo = lo
        a_hi, f_hi, _, dp_hi = hi
        for _ in range(max_ls):
            width = a_hi - a_lo
            if abs(width) <= 1e-16 * max(abs(a_lo), 1.0):
                break
            a = None
            if np.isfinite(f_hi) and np.isfinite(dp_hi):
                a = _cubic_min(a_lo, f_lo, dp_lo, a_hi, f_hi, dp_hi)
            lo_b, hi_b = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
            if a is None or not lo_b <= a <= hi_b:
                a = 0.5 * (a_lo + a_hi)
            fa, ga, dpa = phi(a)
            flat = abs(fa - f_lo) <= ftol
            if not np.isfinite(fa) or fa > f0 + c1 * a * dphi0 + ftol or (fa >= f_lo and not flat) \
                    or (flat and dpa * (a_hi - a_lo) > 0 and abs(dpa) > -c2 * dphi0):
                a_hi, f_hi, dp_hi = a, fa, dpa
            else:
                if abs(dpa) <= -c2 * dphi0:
                    return a, fa, ga
                if dpa * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, dp_hi = a_lo, f_lo, dp_lo
                a_lo, f_lo, g_lo, dp_lo = a, fa, ga, dpa
        raise _LineSearchFailed

    prev = (0.0, f0, g0, dphi0)
    for i in range(max_ls):
        fa, ga, dpa = phi(alpha)
        cur = (alpha, fa, ga, dpa)
        if not np.isfinite(fa) or fa > f0 + c1 * alpha * dphi0 + ftol or (i > 0 and fa >= prev[1] + ftol):
            out = zoom(prev, cur)
            return out + (evals,)
        if abs(dpa) <= -c2 * dphi0:
            return alpha, fa, ga, evals
        if dpa >= 0:
            out = zoom(cur, prev)
            return out + (evals,)
        prev = cur
        alpha *= 2.0
    raise _LineSearchFailed


def lbfgs_minimize(fun, x0, cfg: LbfgsConfig = LbfgsConfig()) -> LbfgsResult:
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    Stops when ``|grad| <= grad_tol`` or after ``max_iter`` iterations; if the
    line search cannot find an acceptable step the best point so far is
    returned with status ``"line_search_failed"``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericInputError("objective is not finite at the starting point")
    pairs = deque(maxlen=cfg.memory)
    history = [f]
    evals = 1
    status = "max_iter"
    it = 0
    for it in range(cfg.max_iter):
        if np.linalg.norm(g) <= cfg.grad_tol:
            status = "converged"
            break
        d = -_two_loop(g, pairs)
        gd = float(g @ d)
        if not gd < 0:
            pairs.clear()
            d = -g
            gd = float(g @ d)
        alpha0 = 1.0 if pairs else min(1.0, 1.0 / np.linalg.norm(g))
        try:
            alpha, f_new, g_new, n = _wolfe_search(fun, x, f, g, d, alpha0, cfg.c1, cfg.c2, cfg.max_ls)
        except _LineSearchFailed:
            status = "line_search_failed"
            break
        evals += n
        g_new = np.asarray(g_new, dtype=float)
        # strong Wolfe conditions at the accepted step
        assert f_new <= f + cfg.c1 * alpha * gd + 1e-12 * abs(f)
        assert abs(g_new @ d) <= cfg.c2 * abs(gd) * (1 + 1e-9)
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        x = x + s
        f, g = float(f_new), g_new
        history.append(f)
        if sy > 1e-12 * float(y @ y) and sy > 0:
            pairs.append((s, y, 1.0 / sy))
    else:
        it = cfg.max_iter
        if np.linalg.norm(g) <= cfg.grad_tol:
            status = "converged"
    return LbfgsResult(x, f, g, it, status, history, evals)
