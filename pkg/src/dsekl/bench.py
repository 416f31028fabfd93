"""Experiment drivers behind the command line: sweeps, Table-1 style comparisons,
the covertype protocol and reproducible seeding."""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import train_batch, train_fixed_subsample, train_rks
from .data import Dataset, generate_xor, load_libsvm, split, standardize, subsample
from .kernels import KernelSpec
from .model_selection import SearchSpace, grid_search
from .objective import error_rate
from .optimizer import StepSchedule, TrainConfig, train_serial
from .parallel import train_parallel

log = logging.getLogger(__name__)

METHODS = ("dsekl", "rks", "empfix", "batch")


def child_seed(root: int, *keys: int) -> int:
    """Seed for one experiment unit, derived from the root seed and its position.

    Derivation depends only on ``keys``, so adding repetitions or datasets
    never changes the seeds of existing ones.
    """
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class MethodParams:
    """Hyperparameters of one method run."""

    lam: float = 1e-3
    sigma: float = 1.0
    eta0: float = 1.0
    I: int = 50
    J: int = 50
    epochs: int = 20
    batch_iters: int = 500
    schedule: str = "inverse_iter"
    workers: int = 1
    blocks: int | None = None
    dampening: bool = True
    fixed_blocks: bool = False
    stop_weight_delta: float = 0.0

    def config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            I=self.I, J=self.J, lam=self.lam, eta0=self.eta0, schedule=self.schedule,
            max_epochs=self.epochs, seed=seed, workers=self.workers, blocks=self.blocks,
            dampening=self.dampening, fixed_blocks=self.fixed_blocks,
            stop_weight_delta=self.stop_weight_delta,
        )

    def with_(self, **changes) -> "MethodParams":
        d = asdict(self)
        d.update(changes)
        return MethodParams(**d)


def fit(method: str, train: Dataset, params: MethodParams, seed: int, validation: Dataset | None = None,
        parallel: bool | None = None):
    """Train one of the four methods; returns ``(model, RunRecord)``."""
    spec = KernelSpec.rbf(params.sigma)
    cfg = params.config(seed)
    if method == "dsekl":
        use_parallel = parallel if parallel is not None else (params.workers > 1 or params.blocks is not None)
        trainer = train_parallel if use_parallel else train_serial
        return trainer(train, spec, cfg, validation)
    if method == "rks":
        return train_rks(train, params.sigma, params.J, cfg, validation)
    if method == "empfix":
        return train_fixed_subsample(train, spec, params.J, cfg, validation)
    if method == "batch":
        return train_batch(train, spec, params.lam, params.batch_iters, params.eta0, params.schedule)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def make_trainer(method: str, base: MethodParams):
    """Adapter for :func:`grid_search`: grid values override ``base``."""

    def trainer(train: Dataset, point: dict, seed: int):
        params = base.with_(lam=point["lam"], sigma=point["sigma"], eta0=point["eta0"],
                            I=int(point["I"]), J=int(point["J"]))
        return fit(method, train, params, seed)[0]

    return trainer


def tune(method: str, train: Dataset, space: SearchSpace, base: MethodParams, seed: int,
         cv_epochs: int | None = None, cv_batch_iters: int | None = None, n_jobs: int = 1):
    """Grid search with a reduced training budget; returns (tuned params, CV table)."""
    cv_base = base.with_(epochs=cv_epochs or base.epochs, batch_iters=cv_batch_iters or base.batch_iters)
    if method == "batch":
        space = SearchSpace(space.lambda_grid, space.sigma_grid, space.eta0_grid, [base.I], [base.J])
    best, table = grid_search(train, space, make_trainer(method, cv_base), seed, n_jobs=n_jobs)
    tuned = base.with_(lam=best["lam"], sigma=best["sigma"], eta0=best["eta0"], I=int(best["I"]), J=int(best["J"]))
    return tuned, best, table


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    method: str
    dataset: str
    config: dict
    repetitions: int
    errors: list[float]
    mean: float = field(init=False)
    std: float = field(init=False)
    wall_time: float = 0.0

    def __post_init__(self):
        self.errors = [float(e) for e in self.errors]
        self.mean = float(np.mean(self.errors)) if self.errors else math.nan
        # population standard deviation
        self.std = float(np.std(self.errors)) if self.errors else math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def write_reports(reports: list[BenchmarkReport], path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")


def read_reports(path) -> list[dict]:
    return json.loads(Path(path).read_text())


# --------------------------------------------------------------------------
# XOR sweeps
# --------------------------------------------------------------------------


def xor_problem(n: int, seed: int) -> tuple[Dataset, Dataset]:
    """Training and test sets of ``n`` points each."""
    rng = np.random.default_rng(seed)
    return generate_xor(n, rng), generate_xor(n, rng)


def file_problem(dataset: Dataset, seed: int, max_points: int | None = None) -> tuple[Dataset, Dataset]:
    """Random half/half split (after optional subsampling), standardized on the training half."""
    rng = np.random.default_rng(seed)
    if max_points is not None:
        dataset = subsample(dataset, max_points, rng)
    n = dataset.n_samples
    train, test = split(dataset, [n // 2, n - n // 2], rng)
    (train, test), _ = standardize(train, [test])
    return train, test


@dataclass
class SweepRow:
    method: str
    param: str
    value: float | str
    mean_error: float
    std: float
    repetitions: int


def run_sweep(axis: str, values, methods, params: dict[str, MethodParams], problem, reps: int, seed: int,
              tuned: dict | None = None) -> list[SweepRow]:
    """Test error of each method as one of I or J varies.

    ``problem(seed) -> (train, test)`` supplies the data of each repetition;
    ``params`` maps method name to its hyperparameters.  ``tuned`` may map
    ``(method, value)`` to replacement params.  Batch does not depend on the
    swept value and is reported once with an empty value.
    """
    if axis not in ("I", "J"):
        raise ValueError("sweep axis must be I or J")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    rows = []
    problems = [problem(child_seed(seed, r, 0)) for r in range(reps)]
    for method in methods:
        sweep_values = [""] if method == "batch" else list(values)
        for v in sweep_values:
            p = params[method]
            if v != "":
                p = p.with_(**{axis: int(v)})
            if tuned and (method, v) in tuned:
                p = tuned[(method, v)]
            errs = []
            for r, (train, test) in enumerate(problems):
                model, _ = fit(method, train, p, child_seed(seed, r, 1))
                errs.append(error_rate(model, test))
            rows.append(SweepRow(method, axis, v, float(np.mean(errs)), float(np.std(errs)), reps))
    return rows


def write_sweep_csv(rows: list[SweepRow], fh) -> None:
    fh.write("method,param,value,mean_error,std,repetitions\n")
    for r in rows:
        v = "" if r.value == "" else f"{r.value:g}"
        fh.write(f"{r.method},{r.param},{v},{r.mean_error!r},{r.std!r},{r.repetitions}\n")


# --------------------------------------------------------------------------
# Table 1
# --------------------------------------------------------------------------

# test error (mean, std) reported for DSEKL and batch SVM
REFERENCE_TABLE1 = {
    "mnist": ((0.00, 0.01), (0.00, 0.01)),
    "diabetes": ((0.20, 0.02), (0.22, 0.02)),
    "breast-cancer": ((0.03, 0.01), (0.03, 0.01)),
    "mushrooms": ((0.03, 0.01), (0.00, 0.00)),
    "sonar": ((0.22, 0.07), (0.26, 0.04)),
    "skin-nonskin": ((0.03, 0.01), (0.01, 0.00)),
    "madelon": ((0.03, 0.01), (0.00, 0.00)),
}

TABLE1_FILES = {
    "mnist": ["mnist.libsvm", "mnist"],
    "diabetes": ["diabetes.libsvm", "diabetes", "diabetes_scale"],
    "breast-cancer": ["breast-cancer.libsvm", "breast-cancer", "breast-cancer_scale"],
    "mushrooms": ["mushrooms.libsvm", "mushrooms"],
    "sonar": ["sonar.libsvm", "sonar", "sonar_scale"],
    "skin-nonskin": ["skin-nonskin.libsvm", "skin_nonskin"],
    "madelon": ["madelon.libsvm", "madelon"],
}


def find_table1_file(name: str, data_dir) -> Path | None:
    for candidate in TABLE1_FILES.get(name, [name]):
        p = Path(data_dir) / candidate
        if p.exists():
            return p
    return None


def table1_dataset(name: str, data_dir) -> Dataset | None:
    """Load one Table 1 dataset, or warn and return None if it is missing or unusable."""
    path = find_table1_file(name, data_dir)
    if path is None:
        warnings.warn(f"{name}: no data file under {data_dir}; skipping", RuntimeWarning, stacklevel=2)
        return None
    try:
        ds = load_libsvm(path)
    except ValueError as exc:
        warnings.warn(f"{name}: cannot use {path}: {exc}; skipping", RuntimeWarning, stacklevel=2)
        return None
    ds.name = name
    return ds


def run_table1_dataset(ds: Dataset, space: SearchSpace, base: dict[str, MethodParams], reps: int, seed: int,
                       methods=("dsekl", "batch"), max_points: int = 1000, cv_epochs: int | None = None,
                       cv_batch_iters: int | None = None, dataset_key: int = 0) -> list[BenchmarkReport]:
    """Subsample, split in halves, tune on the training half and test, ``reps`` times."""
    errors = {m: [] for m in methods}
    chosen = {m: [] for m in methods}
    t0 = time.perf_counter()
    for r in range(reps):
        train, test = file_problem(ds, child_seed(seed, dataset_key, r, 0), max_points)
        for m in methods:
            params, best, _ = tune(m, train, space, base[m], child_seed(seed, dataset_key, r, 1),
                                   cv_epochs=cv_epochs, cv_batch_iters=cv_batch_iters)
            model, _ = fit(m, train, params, child_seed(seed, dataset_key, r, 2))
            err = error_rate(model, test)
            errors[m].append(err)
            chosen[m].append({k: best[k] for k in ("lam", "sigma", "eta0", "I", "J")})
            log.info("%s rep %d %s: test error %.4f (cv %.4f, %s)", ds.name, r, m, err, best["error"], chosen[m][-1])
    wall = time.perf_counter() - t0
    return [
        BenchmarkReport(m, ds.name, {"base": asdict(base[m]), "selected": chosen[m]}, reps, errors[m], wall)
        for m in methods
    ]


# --------------------------------------------------------------------------
# covertype protocol
# --------------------------------------------------------------------------

COVERTYPE_N = 581_012
COVERTYPE_BATCH = 10_000
COVERTYPE_VALIDATION = 1122
COVERTYPE_EVALUATION = 20_000


@dataclass
class CovertypeResult:
    record: object
    evaluation_error: float
    epochs: int
    n_train: int
    batch_size: int
    blocks: int
    batch_error: float | None = None
    batch_n: int | None = None
    sizes: dict = field(default_factory=dict)


def run_covertype(ds: Dataset, seed: int = 0, subsample_to: int | None = None, workers: int = 1,
                  blocks: int | None = None, max_epochs: int = 100, stop_weight_delta: float = 1.0,
                  batch_points: int | None = None, batch_iters: int = 300, batch_eta0: float = 1.0,
                  sigma: float = 1.0, first_checkpoints: int = 10**9) -> CovertypeResult:
    """Covertype training protocol on the parallel engine.

    Holds out validation and evaluation samples, trains with I = J = 10,000
    (scaled by the subsampling ratio), lambda = 1/N, RBF scale ``sigma``,
    step 1/epoch with dampening, and stops once alpha moves less than
    ``stop_weight_delta`` over an epoch.  Holdout sizes scale with the ratio
    too but are kept at 500 validation / 2000 evaluation points or more.
    Optionally trains the batch solver on ``batch_points`` training samples
    for comparison on the same evaluation set.
    """
    rng = np.random.default_rng(seed)
    if subsample_to is not None and subsample_to < ds.n_samples:
        ds = subsample(ds, subsample_to, rng)
        ratio = subsample_to / COVERTYPE_N
        n_val = min(max(round(COVERTYPE_VALIDATION * ratio), 500), ds.n_samples // 10)
        n_eval = min(max(round(COVERTYPE_EVALUATION * ratio), 2000), ds.n_samples // 5)
    else:
        ratio = ds.n_samples / COVERTYPE_N
        n_val = min(COVERTYPE_VALIDATION, ds.n_samples // 10)
        n_eval = min(COVERTYPE_EVALUATION, ds.n_samples // 5)
    n_train = ds.n_samples - n_val - n_eval
    train, val, evaluation = split(ds, [n_train, n_val, n_eval], rng)
    (train, val, evaluation), _ = standardize(train, [val, evaluation])
    batch = max(1, min(COVERTYPE_BATCH, round(COVERTYPE_BATCH * min(ratio, 1.0))))
    k = blocks or max(1, n_train // batch)
    cfg = TrainConfig(I=batch, J=batch, lam=1.0 / n_train, schedule=StepSchedule.INVERSE_EPOCH, eta0=1.0,
                      max_epochs=max_epochs, stop_weight_delta=stop_weight_delta, seed=child_seed(seed, 1),
                      workers=workers, blocks=k, dampening=True, first_checkpoints=first_checkpoints)
    spec = KernelSpec.rbf(sigma)
    log.info("covertype: %d train / %d validation / %d evaluation, I=J=%d, %d blocks", n_train, n_val, n_eval,
             batch, k)
    model, record = train_parallel(train, spec, cfg, val)
    result = CovertypeResult(record, error_rate(model, evaluation), record.epochs_run, n_train, batch, k,
                             sizes={"train": n_train, "validation": n_val, "evaluation": n_eval})
    if batch_points:
        sub = subsample(train, batch_points, np.random.default_rng(child_seed(seed, 2)))
        bmodel, _ = train_batch(sub, spec, 1.0 / sub.n_samples, batch_iters, eta0=batch_eta0)
        result.batch_error = error_rate(bmodel, evaluation)
        result.batch_n = sub.n_samples
    return result
