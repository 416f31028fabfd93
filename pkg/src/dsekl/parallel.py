"""Shared-memory parallel training with AdaGrad-style dampened aggregation.

Each outer step takes one gradient batch and hands the K expansion blocks of
the current partition to a thread pool.  Workers read a snapshot of alpha;
once every worker has returned, the squared gradients are added to the
accumulator G and alpha is updated in a single synchronized step.  Expansion
blocks within a partition are disjoint, so the per-coordinate writes of the
aggregation never overlap and the result does not depend on scheduling.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernels import KernelSpec
from .objective import DualModel, sampled_step
from .optimizer import (
    Checkpoint,
    RunRecord,
    TrainConfig,
    _prepare,
    iterations_per_epoch,
    make_streams,
    sample_indices,
    validation_error,
)

log = logging.getLogger(__name__)


class WorkerError(RuntimeError):
    pass


def partition_family(n: int, batch_size: int, k: int, rng) -> list[np.ndarray]:
    """``k`` disjoint batches of ``batch_size`` indices drawn without replacement.

    If the data cannot supply ``k`` full batches the batch count is reduced;
    if it cannot supply even one, a single batch of all ``n`` indices is used.
    """
    if n < 1 or batch_size < 1 or k < 1:
        raise ValueError(f"invalid partition request n={n}, batch_size={batch_size}, k={k}")
    if batch_size * k > n:
        k_new = n // batch_size
        if k_new < 1:
            warnings.warn(f"only {n} samples for batches of {batch_size}; using one batch of {n}", RuntimeWarning, stacklevel=2)
            k_new, batch_size = 1, n
        else:
            warnings.warn(f"{n} samples cannot fill {k} batches of {batch_size}; using {k_new}", RuntimeWarning, stacklevel=2)
        k = k_new
    drawn = sample_indices(n, batch_size * k, rng)
    return [drawn[i * batch_size:(i + 1) * batch_size] for i in range(k)]


def partition_batches(n: int, batch_size: int, k_workers: int, rng, expansion_size: int | None = None,
                      expansion_rng=None):
    """Gradient batches and expansion blocks for one round of the parallel loop.

    Both families are drawn from ``rng`` unless ``expansion_rng`` is given.
    """
    rows = partition_family(n, batch_size, k_workers, rng)
    cols = partition_family(n, expansion_size or batch_size, k_workers,
                            rng if expansion_rng is None else expansion_rng)
    return rows, cols


@dataclass
class DampeningAccumulator:
    G: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "DampeningAccumulator":
        return cls(np.ones(n))

    def add(self, idx, g):
        self.G[idx] += g * g

    def scale(self, idx) -> np.ndarray:
        return 1.0 / np.sqrt(self.G[idx])


class _Partitions:
    """Supplies gradient batches, redrawing both families when a round is used up."""

    def __init__(self, n, I, J, k, rng_rows, rng_cols, fixed):
        self.n, self.I, self.J, self.k = n, I, J, k
        self.rng_rows, self.rng_cols = rng_rows, rng_cols
        self.fixed = fixed
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.pos = 0

    def next(self):
        if self.pos >= len(self.rows):
            if not self.rows:
                self._draw()
            elif not self.fixed:
                # shrink warnings were already issued for the first round
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    self._draw()
            self.pos = 0
        batch = self.rows[self.pos]
        self.pos += 1
        return batch, self.cols

    def _draw(self):
        self.rows = partition_family(self.n, self.I, self.k, self.rng_rows)
        self.cols = partition_family(self.n, self.J, self.k, self.rng_cols)


def _gradients(pool, dataset, spec, alpha, rows, col_blocks, lam):
    futures = [pool.submit(sampled_step, dataset, spec, alpha, rows, cols, lam) for cols in col_blocks]
    results, failures = [], []
    for k, fut in enumerate(futures):
        try:
            results.append(fut.result())
        except Exception as exc:  # noqa: BLE001 - reported below with worker id
            failures.append((k, exc))
    if failures:
        k, exc = failures[0]
        raise WorkerError(f"worker block {k} of {len(col_blocks)} failed ({len(failures)} total): {exc!r}; "
                          "no update applied") from exc
    return results


def train_parallel(
    dataset: Dataset,
    spec: KernelSpec,
    config: TrainConfig,
    validation: Dataset | None = None,
    on_step=None,
    accumulator: DampeningAccumulator | None = None,
) -> tuple[DualModel, RunRecord]:
    """Parallel doubly stochastic training.

    ``config.workers`` threads process ``config.blocks`` (default: one per
    worker) disjoint expansion blocks per gradient batch.  With
    ``config.dampening`` false the accumulator stays at 1 and the update is the
    plain summed subgradient step.  Pass ``accumulator`` to inspect G after
    the run.
    """
    n, I, J = _prepare(dataset, config)
    k = config.blocks or config.workers
    rng_rows, rng_cols, _ = make_streams(config.seed)
    parts = _Partitions(n, I, J, k, rng_rows, rng_cols, config.fixed_blocks)
    acc = accumulator if accumulator is not None else DampeningAccumulator.identity(n)
    if acc.G.shape != (n,):
        raise ValueError(f"accumulator has {acc.G.shape[0]} entries for {n} samples")
    alpha = np.zeros(n)
    record = RunRecord()
    per_epoch = iterations_per_epoch(n, I)
    start = time.perf_counter()
    record.add(Checkpoint(0, 0.0, float("nan"), validation_error(alpha, dataset, spec, validation), 0.0))

    t = 0
    with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="dsekl") as pool:
        for epoch in range(1, config.max_epochs + 1):
            alpha_start = alpha.copy()
            epoch_obj = 0.0
            for _ in range(per_epoch):
                t += 1
                rows, col_blocks = parts.next()
                results = _gradients(pool, dataset, spec, alpha, rows, col_blocks, config.lam)
                for cols, (g, _) in zip(col_blocks, results):
                    if not np.all(np.isfinite(g)):
                        raise FloatingPointError(f"non-finite gradient at step {t} (epoch {epoch}); no update applied")
                eta = config.step_size(t, epoch)
                # barrier passed: aggregate, then apply once
                if config.dampening:
                    for cols, (g, _) in zip(col_blocks, results):
                        acc.add(cols, g)
                    for cols, (g, _) in zip(col_blocks, results):
                        alpha[cols] -= eta * (g * acc.scale(cols))
                else:
                    for cols, (g, _) in zip(col_blocks, results):
                        alpha[cols] -= eta * g
                step_obj = sum(obj for _, obj in results) / (len(results) * len(rows))
                epoch_obj += step_obj
                if on_step is not None:
                    on_step(t, alpha)
                if t <= config.first_checkpoints and t % per_epoch:
                    record.add(Checkpoint(t, t / per_epoch, step_obj,
                                          validation_error(alpha, dataset, spec, validation),
                                          time.perf_counter() - start))
            change = float(np.linalg.norm(alpha - alpha_start))
            record.add(Checkpoint(t, float(epoch), epoch_obj / per_epoch,
                                  validation_error(alpha, dataset, spec, validation),
                                  time.perf_counter() - start))
            record.epochs_run = epoch
            log.info("epoch %d: objective %.4g, alpha change %.4g", epoch, epoch_obj / per_epoch, change)
            if change < config.stop_weight_delta:
                record.stopped_early = True
                break
    return DualModel(alpha, dataset, spec), record


@dataclass
class SpeedupRow:
    workers: int
    seconds: float
    speedup: float


def measure_speedup(
    dataset: Dataset,
    spec: KernelSpec,
    config: TrainConfig,
    worker_counts,
    repeats: int = 3,
) -> list[SpeedupRow]:
    """Time one gradient batch against all K expansion blocks for each worker count.

    The batch and blocks are drawn once from ``config.seed`` and reused for
    every row; K is ``config.blocks`` or the largest worker count.  Each time
    is the median of ``repeats`` runs.
    """
    n, I, J = _prepare(dataset, config)
    k = config.blocks or max(worker_counts)
    rng_rows, rng_cols, _ = make_streams(config.seed)
    rows = partition_family(n, I, 1, rng_rows)[0]
    col_blocks = partition_family(n, J, k, rng_cols)
    alpha = np.zeros(n)

    def timed(w):
        times = []
        with ThreadPoolExecutor(max_workers=w) as pool:
            _gradients(pool, dataset, spec, alpha, rows, col_blocks, config.lam)  # warm-up
            for _ in range(repeats):
                t0 = time.perf_counter()
                _gradients(pool, dataset, spec, alpha, rows, col_blocks, config.lam)
                times.append(time.perf_counter() - t0)
        return statistics.median(times)

    base = timed(1)
    out = []
    for w in worker_counts:
        secs = base if w == 1 else timed(w)
        out.append(SpeedupRow(int(w), secs, base / secs if secs > 0 else math.inf))
    return out


def write_speedup_csv(rows: list[SpeedupRow], fh):
    w = csv.writer(fh)
    w.writerow(["workers", "seconds", "speedup"])
    for r in rows:
        w.writerow([r.workers, f"{r.seconds:.6f}", f"{r.speedup:.4f}"])
