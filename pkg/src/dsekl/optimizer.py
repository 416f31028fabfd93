"""Serial doubly stochastic training of the kernel expansion coefficients."""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .kernels import KernelSpec
from .objective import DualModel, error_rate, sampled_step

log = logging.getLogger(__name__)


class StepSchedule(str, enum.Enum):
    INVERSE_ITER = "inverse_iter"  # eta0 / t
    INVERSE_EPOCH = "inverse_epoch"  # eta0 / e


@dataclass
class TrainConfig:
    I: int = 50
    J: int = 50
    lam: float = 1e-3
    schedule: StepSchedule = StepSchedule.INVERSE_ITER
    eta0: float = 1.0
    max_epochs: int = 20
    stop_weight_delta: float = 0.0
    seed: int = 0
    workers: int = 1
    # parallel variant only
    blocks: Optional[int] = None
    dampening: bool = True
    fixed_blocks: bool = False
    # "uniform" draws random index sets; "full" uses every index, in order
    sampler: str = "uniform"
    # iterations at the start of a run that always get a checkpoint
    first_checkpoints: int = 10

    def __post_init__(self):
        self.schedule = StepSchedule(self.schedule)
        if self.I < 1 or self.J < 1:
            raise ValueError(f"I and J must be positive, got I={self.I}, J={self.J}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.stop_weight_delta < 0:
            raise ValueError("stop_weight_delta must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sampler not in ("uniform", "full"):
            raise ValueError(f"unknown sampler {self.sampler!r}")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.value
        return d

    def step_size(self, t: int, epoch: int) -> float:
        if self.schedule is StepSchedule.INVERSE_ITER:
            return self.eta0 / t
        return self.eta0 / epoch


@dataclass
class Checkpoint:
    iteration: int
    epoch: float
    objective: float
    validation_error: float
    elapsed: float


@dataclass
class RunRecord:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False

    FIELDS = ("iteration", "epoch", "objective", "validation_error", "elapsed_seconds")

    def add(self, cp: Checkpoint):
        if self.checkpoints and cp.iteration <= self.checkpoints[-1].iteration:
            raise ValueError("checkpoint iterations must be strictly increasing")
        self.checkpoints.append(cp)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(c, name) for c in self.checkpoints], dtype=float)

    def epoch_checkpoints(self) -> list[Checkpoint]:
        return [c for c in self.checkpoints if float(c.epoch).is_integer()]

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(self.FIELDS)
        for c in self.checkpoints:
            w.writerow([c.iteration, repr(c.epoch), repr(c.objective), repr(c.validation_error), f"{c.elapsed:.6f}"])


def make_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent generators for gradient indices, expansion indices and extras."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_indices(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw of ``min(size, n)`` distinct indices from ``range(n)``."""
    if n < 1:
        raise ValueError("cannot sample from an empty index set")
    return rng.choice(n, size=min(size, n), replace=False)


def iterations_per_epoch(n: int, batch: int) -> int:
    return max(1, math.ceil(n / min(batch, n)))


def validation_error(alpha, dataset, spec, validation) -> float:
    if validation is None:
        return float("nan")
    return error_rate(DualModel(alpha, dataset, spec), validation)


def _prepare(dataset: Dataset, config: TrainConfig):
    if dataset.n_samples == 0:
        raise ValueError("cannot train on an empty dataset")
    dataset.check_binary()
    n = dataset.n_samples
    return n, min(config.I, n), min(config.J, n)


def train_serial(
    dataset: Dataset,
    spec: KernelSpec,
    config: TrainConfig,
    validation: Dataset | None = None,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[DualModel, RunRecord]:
    """Train with a fresh gradient block and a fresh expansion block every iteration."""
    n, I, J = _prepare(dataset, config)
    if config.sampler == "full":
        everything = np.arange(n)
        return _run(dataset, spec, config, validation, lambda rng: everything, lambda rng: everything, on_step)
    return _run(
        dataset,
        spec,
        config,
        validation,
        lambda rng: sample_indices(n, I, rng),
        lambda rng: sample_indices(n, J, rng),
        on_step,
    )


def _run(dataset, spec, config, validation, draw_rows, draw_cols, on_step):
    n, I, _ = _prepare(dataset, config)
    rng_rows, rng_cols, _ = make_streams(config.seed)
    alpha = np.zeros(n)
    record = RunRecord()
    per_epoch = iterations_per_epoch(n, I)
    start = time.perf_counter()
    record.add(Checkpoint(0, 0.0, float("nan"), validation_error(alpha, dataset, spec, validation), 0.0))

    t = 0
    for epoch in range(1, config.max_epochs + 1):
        alpha_start = alpha.copy()
        epoch_obj = 0.0
        for _ in range(per_epoch):
            t += 1
            rows = draw_rows(rng_rows)
            cols = draw_cols(rng_cols)
            g, obj = sampled_step(dataset, spec, alpha, rows, cols, config.lam)
            if not (np.all(np.isfinite(g)) and math.isfinite(obj)):
                raise FloatingPointError(
                    f"non-finite gradient at iteration {t} (epoch {epoch}): "
                    f"max|alpha|={np.max(np.abs(alpha)):.3g}, step={config.step_size(t, epoch):.3g}, "
                    f"lambda={config.lam:g}, {spec}"
                )
            alpha[cols] -= config.step_size(t, epoch) * g
            epoch_obj += obj / len(rows)
            if on_step is not None:
                on_step(t, alpha)
            if t <= config.first_checkpoints and t % per_epoch:
                record.add(Checkpoint(t, t / per_epoch, obj / len(rows),
                                      validation_error(alpha, dataset, spec, validation),
                                      time.perf_counter() - start))
        change = float(np.linalg.norm(alpha - alpha_start))
        record.add(Checkpoint(t, float(epoch), epoch_obj / per_epoch,
                              validation_error(alpha, dataset, spec, validation),
                              time.perf_counter() - start))
        record.epochs_run = epoch
        log.debug("epoch %d: objective %.4g, alpha change %.4g", epoch, epoch_obj / per_epoch, change)
        if change < config.stop_weight_delta:
            record.stopped_early = True
            break
    return DualModel(alpha, dataset, spec), record
