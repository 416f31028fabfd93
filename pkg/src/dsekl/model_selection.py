"""Exhaustive grid search with two-fold cross-validation."""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, split

log = logging.getLogger(__name__)

PARAM_NAMES = ("lam", "sigma", "eta0", "I", "J")


def log_grid(lo_exp: int, hi_exp: int) -> list[float]:
    return [10.0**e for e in range(lo_exp, hi_exp + 1)]


@dataclass
class SearchSpace:
    lambda_grid: Sequence[float] = field(default_factory=lambda: log_grid(-6, 6))
    sigma_grid: Sequence[float] = field(default_factory=lambda: log_grid(-6, 6))
    eta0_grid: Sequence[float] = field(default_factory=lambda: log_grid(-4, 4))
    I_grid: Sequence[int] = (50,)
    J_grid: Sequence[int] = (50,)

    def __post_init__(self):
        for name in ("lambda_grid", "sigma_grid", "eta0_grid", "I_grid", "J_grid"):
            values = list(getattr(self, name))
            if not values:
                raise ValueError(f"{name} is empty")
            if any(not v > 0 for v in values):
                raise ValueError(f"{name} must contain positive values")
            setattr(self, name, values)

    def points(self) -> list[dict]:
        grids = (self.lambda_grid, self.sigma_grid, self.eta0_grid, self.I_grid, self.J_grid)
        return [dict(zip(PARAM_NAMES, combo)) for combo in itertools.product(*grids)]

    def __len__(self):
        return len(self.lambda_grid) * len(self.sigma_grid) * len(self.eta0_grid) * len(self.I_grid) * len(self.J_grid)


Trainer = Callable[[Dataset, dict, int], object]


def two_folds(dataset: Dataset, rng) -> tuple[Dataset, Dataset]:
    n = dataset.n_samples
    a, b = split(dataset, [n // 2, n - n // 2], rng)
    return a, b


def _fold_error(trainer: Trainer, train: Dataset, test: Dataset, params: dict, seed: int) -> float:
    model = trainer(train, params, seed)
    return float(np.mean(model.predict(test.X) != test.y))


def _evaluate(trainer, folds, params, seed):
    a, b = folds
    row = dict(params)
    try:
        errs = [_fold_error(trainer, a, b, params, seed), _fold_error(trainer, b, a, params, seed)]
        row.update(error=float(np.mean(errs)), fold1_error=errs[0], fold2_error=errs[1], failure="")
    except Exception as exc:  # noqa: BLE001 - a failing grid point is scored, not fatal
        log.warning("grid point %s failed: %r", params, exc)
        row.update(error=1.0, fold1_error=1.0, fold2_error=1.0, failure=repr(exc))
    return row


def _rank_key(row):
    # lower error, then more regularization, then cheaper expansions and batches
    return (row["error"], -row["lam"], row["J"], row["I"])


def grid_search(
    dataset: Dataset,
    space: SearchSpace,
    trainer: Trainer,
    rng,
    n_jobs: int = 1,
) -> tuple[dict, list[dict]]:
    """Score every grid point by mean two-fold CV error.

    ``trainer(train, params, seed)`` must return an object with
    ``predict(X)``.  All grid points share the same folds and training seed.
    Returns the winning parameter dict (with its error) and the full table in
    grid order.
    """
    if dataset.n_samples < 4:
        raise ValueError("grid search needs at least 4 samples")
    rng = np.random.default_rng(rng)
    folds = two_folds(dataset, rng)
    seed = int(rng.integers(2**63))
    points = space.points()
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            table = list(pool.map(lambda p: _evaluate(trainer, folds, p, seed), points))
    else:
        table = [_evaluate(trainer, folds, p, seed) for p in points]
    best = min(table, key=_rank_key)
    return dict(best), table


def write_cv_csv(table: list[dict], fh):
    fields = list(PARAM_NAMES) + ["error", "fold1_error", "fold2_error", "failure"]
    w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
    w.writeheader()
    for row in table:
        w.writerow(row)
