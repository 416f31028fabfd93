"""Comparison systems: random Fourier features, a frozen landmark subset and full-batch training."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .kernels import KernelSpec, block_values
from .objective import DualModel, hinge_block_step, predict_labels
from .optimizer import (
    Checkpoint,
    RunRecord,
    StepSchedule,
    TrainConfig,
    _prepare,
    _run,
    iterations_per_epoch,
    make_streams,
    sample_indices,
)

BATCH_MAX_SAMPLES = 5000


@dataclass
class RKSFeatureMap:
    """z(x) = sqrt(2 / J) cos(W x + b), W ~ N(0, 1/sigma^2), b ~ U[0, 2 pi)."""

    frequencies: np.ndarray
    phases: np.ndarray
    sigma: float

    @property
    def n_components(self) -> int:
        return self.frequencies.shape[0]

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[1]

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 / self.n_components)

    @classmethod
    def sample(cls, n_features: int, n_components: int, sigma: float, rng) -> "RKSFeatureMap":
        if n_components < 1:
            raise ValueError("need at least one random feature")
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        rng = np.random.default_rng(rng)
        W = rng.standard_normal((n_components, n_features)) / sigma
        b = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
        return cls(W, b, float(sigma))

    def transform(self, X) -> np.ndarray:
        return rks_transform(X, self)


def rks_transform(x, fmap: RKSFeatureMap) -> np.ndarray:
    """Random Fourier features of a vector (returns 1-d) or of a matrix of rows."""
    single = not sp.issparse(x) and np.ndim(x) == 1
    X = x if sp.issparse(x) else np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != fmap.n_features:
        raise ValueError(f"dimension mismatch: input has {X.shape[1]} features, map expects {fmap.n_features}")
    proj = X @ fmap.frequencies.T
    proj = np.asarray(proj) + fmap.phases
    Z = fmap.scale * np.cos(proj)
    return Z[0] if single else Z


@dataclass
class LinearModel:
    weights: np.ndarray
    feature_map: RKSFeatureMap

    def decision_values(self, X) -> np.ndarray:
        return rks_transform(X, self.feature_map) @ self.weights if X.shape[0] else np.zeros(0)

    def predict(self, X) -> np.ndarray:
        return predict_labels(self.decision_values(X))


def _linear_error(model: LinearModel, validation: Dataset | None) -> float:
    if validation is None or validation.n_samples == 0:
        return float("nan")
    return float(np.mean(model.predict(validation.X) != validation.y))


def train_rks(
    dataset: Dataset,
    sigma: float,
    n_components: int,
    config: TrainConfig,
    validation: Dataset | None = None,
) -> tuple[LinearModel, RunRecord]:
    """Hinge-loss SGD on random Fourier features.

    Uses the same gradient batch size, regularizer scaling, step schedule and
    gradient-index stream as :func:`train_serial`, so the two differ only in
    the kernel approximation.
    """
    n, I, _ = _prepare(dataset, config)
    rng_rows, _, rng_map = make_streams(config.seed)
    fmap = RKSFeatureMap.sample(dataset.n_features, n_components, sigma, rng_map)
    model = LinearModel(np.zeros(n_components), fmap)
    w = model.weights
    record = RunRecord()
    per_epoch = iterations_per_epoch(n, I)
    start = time.perf_counter()
    record.add(Checkpoint(0, 0.0, float("nan"), _linear_error(model, validation), 0.0))
    t = 0
    for epoch in range(1, config.max_epochs + 1):
        w_start = w.copy()
        epoch_obj = 0.0
        for _ in range(per_epoch):
            t += 1
            rows = sample_indices(n, I, rng_rows) if config.sampler == "uniform" else np.arange(n)
            Z = rks_transform(dataset.X[rows], fmap)
            g, obj = hinge_block_step(Z, dataset.y[rows], w, config.lam, len(rows) / n)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient at iteration {t} (epoch {epoch})")
            w -= config.step_size(t, epoch) * g
            epoch_obj += obj / len(rows)
        record.add(Checkpoint(t, float(epoch), epoch_obj / per_epoch, _linear_error(model, validation),
                              time.perf_counter() - start))
        record.epochs_run = epoch
        if np.linalg.norm(w - w_start) < config.stop_weight_delta:
            record.stopped_early = True
            break
    return model, record


def train_fixed_subsample(
    dataset: Dataset,
    spec: KernelSpec,
    subset_size: int,
    config: TrainConfig,
    validation: Dataset | None = None,
) -> tuple[DualModel, RunRecord]:
    """Same loop as :func:`train_serial`, but the expansion set is drawn once and frozen.

    The landmark set comes from the expansion-index stream, so with
    ``subset_size = N`` the run matches DSEKL with ``J = N`` up to summation
    order.
    """
    n, I, _ = _prepare(dataset, config)
    if subset_size < 1:
        raise ValueError("subset_size must be positive")
    landmarks = sample_indices(n, subset_size, make_streams(config.seed)[1])

    def draw_rows(rng):
        return sample_indices(n, I, rng) if config.sampler == "uniform" else np.arange(n)

    return _run(dataset, spec, config, validation, draw_rows, lambda rng: landmarks, None)


def train_batch(
    dataset: Dataset,
    spec: KernelSpec,
    lam: float,
    max_iters: int,
    eta0: float = 1.0,
    schedule: StepSchedule | str = StepSchedule.INVERSE_ITER,
    tol: float = 1e-8,
    on_step=None,
) -> tuple[DualModel, RunRecord]:
    """Full-gradient subgradient descent on the kernel SVM objective.

    Holds the whole N x N Gram matrix, so it refuses datasets above
    ``BATCH_MAX_SAMPLES`` points.  Stops when the objective changes by less
    than ``tol`` between iterations or after ``max_iters`` steps.  Iteration
    ``t`` counts as epoch ``t`` for the step schedule.
    """
    n = dataset.n_samples
    if n > BATCH_MAX_SAMPLES:
        raise ValueError(
            f"batch training needs the full {n} x {n} Gram matrix; the limit is "
            f"{BATCH_MAX_SAMPLES} samples. Use the doubly stochastic trainer (method dsekl) instead."
        )
    config = TrainConfig(I=n, J=n, lam=lam, eta0=eta0, schedule=schedule, max_epochs=max_iters)
    _prepare(dataset, config)
    idx = np.arange(n)
    K = block_values(dataset, idx, idx, spec)
    y = dataset.y
    alpha = np.zeros(n)
    record = RunRecord()
    every = max(1, max_iters // 100)
    start = time.perf_counter()
    prev = math.inf
    for t in range(1, max_iters + 1):
        g, obj = hinge_block_step(K, y, alpha, lam, 1.0)
        if not (np.all(np.isfinite(g)) and math.isfinite(obj)):
            raise FloatingPointError(f"batch subgradient diverged at iteration {t} (lambda={lam:g}, eta0={eta0:g}, {spec})")
        if abs(prev - obj) < tol:
            record.stopped_early = True
            break
        prev = obj
        alpha -= config.step_size(t, t) * g
        if on_step is not None:
            on_step(t, alpha)
        if t % every == 0 or t <= 10:
            record.add(Checkpoint(t, float(t), obj / n, float("nan"), time.perf_counter() - start))
        record.epochs_run = t
    return DualModel(alpha, dataset, spec), record
