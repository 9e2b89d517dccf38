"""Per-component NN training and the hidden-layer size search."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cells import get_cell
from .charlib import CharDataset, subsample
from .errors import ConfigError, SizeError
from .lbfgs import LbfgsConfig, lbfgs_minimize
from .nn import DEFAULT_L2, NnModel, NnSet, forward, init_model, objective

H_CANDIDATES = tuple(range(10, 51, 2))
N_FOLDS = 5
TEST_FRAC = 0.1
MIN_ROWS = 50
TRAIN_SAMPLES = 500
ESIM_TARGET = 0.01


@dataclass(frozen=True)
class TrainConfig:
    lbfgs: LbfgsConfig = LbfgsConfig()
    folds: int = N_FOLDS
    test_frac: float = TEST_FRAC
    l2: float = DEFAULT_L2
    log_currents: bool = False
    log_caps: bool = False
    samples: int = TRAIN_SAMPLES  # rows drawn from the grid per cell

    @property
    def seed(self) -> int:
        return self.lbfgs.seed

    def use_log(self, component: str) -> bool:
        return self.log_currents if component.startswith("I_") else self.log_caps


@dataclass
class TrainReport:
    component: str
    hidden: int
    final_loss: float
    iterations: int
    status: str
    fold_losses: list
    best_fold: int
    test_loss: float  # mean squared error of raw targets over the target span squared
    e_sim: float = float("nan")

    @property
    def test_rel_rmse(self) -> float:
        return float(np.sqrt(self.test_loss))

    @property
    def folds(self) -> int:
        return len(self.fold_losses)


def _split(n: int, cfg: TrainConfig, rng):
    perm = rng.permutation(n)
    n_test = max(1, int(round(cfg.test_frac * n)))
    return perm[n_test:], perm[:n_test]


def train_component(ds: CharDataset, H: int, cfg: TrainConfig = TrainConfig()):
    """Fit one component network; returns ``(NnModel, TrainReport)``.

    The seeded 10% test rows are held out before anything is fitted, so
    normalization, y_min and every fold see only the remaining 90%.
    """
    if not 1 <= H <= 1024:
        raise ConfigError(f"hidden size {H} outside [1, 1024]")
    if ds.rows < MIN_ROWS:
        raise SizeError(f"{ds.component}: {ds.rows} rows, need at least {MIN_ROWS}")
    rng = np.random.default_rng([cfg.seed, H])
    train, test = _split(ds.rows, cfg, rng)
    X, y = ds.X, ds.y
    base = init_model(X[train], y[train], H, rng, cfg.use_log(ds.component))

    folds = np.array_split(train, cfg.folds)
    results = []
    for k in range(cfg.folds):
        val = folds[k]
        fit = np.concatenate([folds[j] for j in range(cfg.folds) if j != k])
        start = init_model(X[train], y[train], H, np.random.default_rng([cfg.seed, H, k]), base.log)
        res = lbfgs_minimize(objective(start, X[fit], y[fit], cfg.l2), start.weights(), cfg.lbfgs)
        val_loss, _ = objective(start, X[val], y[val], 0.0)(res.x)
        results.append((float(val_loss), res))
    fold_losses = [v for v, _ in results]
    best = int(np.argmin(fold_losses))

    res = lbfgs_minimize(objective(base, X[train], y[train], cfg.l2), results[best][1].x, cfg.lbfgs)
    model = base.with_weights(res.x)

    span = float(np.ptp(y[train])) or 1.0
    err = (forward(model, X[test]) - y[test]) / span
    report = TrainReport(ds.component, H, float(res.f), res.iterations, res.status,
                         fold_losses, best, float(np.mean(err**2)))
    return model, report


def _train_one(args):
    ds, H, cfg = args
    return train_component(ds, H, cfg)


def train_cell(datasets: dict, H: int, cfg: TrainConfig = TrainConfig(), jobs: int = 1):
    """Train every component of a cell on one shared row subset.

    Components are independent, so ``jobs > 1`` trains them in worker
    processes; results do not depend on ``jobs``.
    """
    names = list(datasets)
    work = []
    for name in names:
        ds = datasets[name]
        n = min(cfg.samples, ds.rows)
        work.append((subsample(ds, n, cfg.seed) if n < ds.rows else ds, H, cfg))
    if jobs > 1 and len(work) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            results = list(pool.map(_train_one, work))
    else:
        results = [_train_one(w) for w in work]
    models = {n: r[0] for n, r in zip(names, results)}
    reports = {n: r[1] for n, r in zip(names, results)}
    return models, reports


def nnset(cell: str, models: dict) -> NnSet:
    _, schema = get_cell(cell)
    return NnSet(schema.names, [models[n] for n in schema.names])


@dataclass
class SearchResult:
    cell: str
    hidden: int
    e_sim: float
    models: dict
    reports: dict
    tried: list = field(default_factory=list)  # (H, e_sim) pairs
    status: str = "ok"  # "ok" | "no_candidate"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def search_hidden_size(cell: str, datasets: dict, probe, cfg: TrainConfig = TrainConfig(),
                       candidates=H_CANDIDATES, target: float = ESIM_TARGET,
                       jobs: int = 1) -> SearchResult:
    """Smallest hidden size whose probe E_sim is below ``target``.

    ``probe(nnset) -> e_sim`` runs the probe benches with the candidate
    networks and measures them against the reference.
    """
    tried = []
    last = None
    for H in candidates:
        models, reports = train_cell(datasets, H, cfg, jobs)
        e = float(probe(nnset(cell, models)))
        for r in reports.values():
            r.e_sim = e
        tried.append((H, e))
        last = (H, e, models, reports)
        if e < target:
            return SearchResult(cell, H, e, models, reports, tried)
    H, e, models, reports = last
    return SearchResult(cell, H, e, models, reports, tried, "no_candidate")
