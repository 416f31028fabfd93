"""``dsekl`` command line.

Every command accepts ``--config FILE``: a flat ``key = value`` file whose
keys are the long option names (``lam = 1e-3``, ``max-epochs = 30``).
Explicit flags override the file, the file overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench
from .baselines import LinearModel
from .data import DATA_DIR_ENV, Dataset, load_libsvm, stack
from .kernels import KernelSpec
from .model_io import load_model, save_model
from .model_selection import SearchSpace, log_grid, write_cv_csv
from .objective import error_rate
from .optimizer import TrainConfig
from .parallel import measure_speedup, write_speedup_csv

log = logging.getLogger("dsekl")


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    """Parse a flat key/value file (``#`` comments, ``=`` or ``:`` separators)."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, value = line.split(sep, 1)
                    break
            else:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# --------------------------------------------------------------------------
# argument groups
# --------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="flat key = value file with option defaults")
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_hyper(p):
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--I", type=int, default=50, dest="I", help="gradient batch size")
    g.add_argument("--J", type=int, default=50, dest="J", help="expansion size / number of random features")
    g.add_argument("--lam", type=float, default=1e-3, help="regularization strength")
    g.add_argument("--sigma", type=float, default=1.0, help="RBF length scale")
    g.add_argument("--eta0", type=float, default=1.0, help="step size multiplier")
    g.add_argument("--schedule", choices=["inverse_iter", "inverse_epoch"], default="inverse_iter")
    g.add_argument("--max-epochs", type=int, default=20)
    g.add_argument("--stop-delta", type=float, default=0.0, help="stop once alpha moves less than this per epoch")
    g.add_argument("--batch-iters", type=int, default=500, help="iterations for the batch solver")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--blocks", type=int, default=None, help="expansion blocks per step (parallel; default = workers)")
    g.add_argument("--dampening", type=_bool, default=True, help="AdaGrad dampening in the parallel trainer")
    g.add_argument("--fixed-blocks", type=_bool, default=False, help="keep the first block partition for the whole run")


def _add_grid(p):
    g = p.add_argument_group("search grid")
    g.add_argument("--lambda-grid", type=float_list, default=log_grid(-6, 6))
    g.add_argument("--sigma-grid", type=float_list, default=log_grid(-6, 6))
    g.add_argument("--eta0-grid", type=float_list, default=log_grid(-4, 4))
    g.add_argument("--I-grid", type=int_list, default=None, dest="I_grid", help="default: the --I value")
    g.add_argument("--J-grid", type=int_list, default=None, dest="J_grid", help="default: the --J value")
    g.add_argument("--cv-epochs", type=int, default=None, help="epochs per CV fit (default: --max-epochs)")
    g.add_argument("--cv-batch-iters", type=int, default=None)
    g.add_argument("--n-jobs", type=int, default=1, help="grid points evaluated concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsekl", description="Doubly stochastic kernel SVM training and benchmarks.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("train", help="train a model on a libsvm file")
    _add_common(p)
    p.add_argument("--data", required=True, help=f"libsvm training file (also looked up under ${DATA_DIR_ENV})")
    p.add_argument("--validation", help="libsvm file scored at every checkpoint")
    p.add_argument("--dim", type=int, default=None, help="feature dimension override")
    p.add_argument("--method", choices=bench.METHODS, default="dsekl")
    p.add_argument("--model-out", default="model.txt")
    p.add_argument("--metrics-out", default="metrics.csv")
    _add_hyper(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a libsvm file with a saved model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write one predicted label per line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="test error as I or J varies")
    _add_common(p)
    p.add_argument("--axis", choices=["I", "J"], required=True)
    p.add_argument("--values", type=int_list, required=True)
    p.add_argument("--methods", type=str_list, default=["dsekl", "rks", "empfix", "batch"])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--data", help="libsvm file split in halves per repetition (default: XOR data)")
    p.add_argument("--n", type=int, default=100, help="XOR training and test size")
    p.add_argument("--tune", action="store_true", help="grid-search each method at each swept value")
    p.add_argument("--out", default="sweep.csv")
    _add_hyper(p)
    _add_grid(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("table1", help="DSEKL vs batch on the small benchmark datasets")
    _add_common(p)
    p.add_argument("--data-dir", default=None, help=f"directory of libsvm files (default ${DATA_DIR_ENV} or ./data)")
    p.add_argument("--datasets", type=str_list, default=list(bench.REFERENCE_TABLE1))
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--max-points", type=int, default=1000)
    p.add_argument("--out", default="table1.json")
    _add_hyper(p)
    _add_grid(p)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("covertype", help="large-scale protocol with the parallel trainer")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--subsample", type=int, default=None, help="work on a random subsample of this size")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--stop-delta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--batch-points", type=int, default=0, help="also train the batch solver on this many points")
    p.add_argument("--batch-iters", type=int, default=300)
    p.add_argument("--batch-eta0", type=float, default=1.0)
    p.add_argument("--metrics-out", default="covertype_metrics.csv")
    p.add_argument("--out", default="covertype.json")
    p.set_defaults(func=cmd_covertype)

    p = sub.add_parser("speedup", help="time one gradient batch against all expansion blocks")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--worker-counts", type=int_list, default=[1, 2, 4])
    p.add_argument("--I", type=int, default=1000, dest="I")
    p.add_argument("--J", type=int, default=1000, dest="J")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--blocks", type=int, default=None, help="default: the largest worker count")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--duplicate", type=int, default=1, help="stack the data this many times")
    p.add_argument("--out", default="speedup.csv")
    p.set_defaults(func=cmd_speedup)

    p = sub.add_parser("gridsearch", help="two-fold CV grid search")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--method", choices=bench.METHODS, default="dsekl")
    p.add_argument("--out", default="cv.csv")
    _add_hyper(p)
    _add_grid(p)
    p.set_defaults(func=cmd_gridsearch)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and argv and not argv[0].startswith("-"):
        sub = _subparser(parser, argv[0])
        if sub is not None:
            try:
                values = read_config(known.config)
            except OSError as exc:
                parser.error(f"cannot read config file: {exc}")
            except ConfigError as exc:
                parser.error(str(exc))
            actions = {a.dest: a for a in sub._actions}
            defaults = {}
            for key, raw in values.items():
                action = actions.get(key) or actions.get(key.upper())
                if action is None or key in ("config", "help"):
                    sub.error(f"unknown key {key!r} in {known.config}")
                try:
                    defaults[action.dest] = action.type(raw) if action.type else raw
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    sub.error(f"bad value for {key!r} in {known.config}: {exc}")
                if action.choices is not None and defaults[action.dest] not in action.choices:
                    sub.error(f"{key!r} must be one of {', '.join(map(str, action.choices))}")
                action.required = False
            sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _params(args) -> bench.MethodParams:
    return bench.MethodParams(
        lam=args.lam, sigma=args.sigma, eta0=args.eta0, I=args.I, J=args.J, epochs=args.max_epochs,
        batch_iters=args.batch_iters, schedule=args.schedule, workers=args.workers, blocks=args.blocks,
        dampening=args.dampening, fixed_blocks=args.fixed_blocks, stop_weight_delta=args.stop_delta,
    )


def _space(args) -> SearchSpace:
    return SearchSpace(args.lambda_grid, args.sigma_grid, args.eta0_grid, args.I_grid or [args.I],
                       args.J_grid or [args.J])


def _align(a: Dataset, b: Dataset | None):
    if b is None or a.n_features == b.n_features:
        return a, b
    d = max(a.n_features, b.n_features)
    return a.with_features(d), b.with_features(d)


def cmd_train(args) -> int:
    train = load_libsvm(args.data, args.dim)
    validation = load_libsvm(args.validation, args.dim) if args.validation else None
    train, validation = _align(train, validation)
    params = _params(args)
    t0 = time.perf_counter()
    model, record = bench.fit(args.method, train, params, args.seed, validation)
    elapsed = time.perf_counter() - t0
    save_model(model, args.model_out)
    with open(args.metrics_out, "w", newline="") as fh:
        record.write_csv(fh)
    print(f"trained {args.method} on {train.n_samples} samples in {elapsed:.2f}s "
          f"({record.epochs_run} epochs); training error {error_rate(model, train):.4f}")
    print(f"model -> {args.model_out}, metrics -> {args.metrics_out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    n_features = model.feature_map.n_features if isinstance(model, LinearModel) else model.expansion.n_features
    data = load_libsvm(args.data)
    if data.n_features > n_features:
        raise ValueError(f"{args.data} has {data.n_features} features, the model was trained on {n_features}")
    data = data.with_features(n_features)
    labels = model.predict(data.X)
    if args.out:
        with open(args.out, "w") as fh:
            fh.writelines(f"{int(v):+d}\n" for v in labels)
    print(f"error rate {float(np.mean(labels != data.y)):.4f} on {data.n_samples} samples")
    return 0


def cmd_sweep(args) -> int:
    base = _params(args)
    params = {m: base for m in args.methods}
    if args.data:
        full = load_libsvm(args.data)

        def problem(seed):
            return bench.file_problem(full, seed)
    else:
        def problem(seed):
            return bench.xor_problem(args.n, seed)

    tuned = None
    if args.tune:
        tuned = {}
        space = _space(args)
        train, _ = problem(bench.child_seed(args.seed, 10**6))
        for m in args.methods:
            for v in [""] if m == "batch" else args.values:
                p = base if v == "" else base.with_(**{args.axis: v})
                grid = SearchSpace(space.lambda_grid, space.sigma_grid, space.eta0_grid, [p.I], [p.J])
                tuned[(m, v)], best, _ = bench.tune(m, train, grid, p, bench.child_seed(args.seed, 10**6, 1),
                                                    args.cv_epochs, args.cv_batch_iters, args.n_jobs)
                log.info("tuned %s at %s=%s: %s", m, args.axis, v, best)
    rows = bench.run_sweep(args.axis, args.values, args.methods, params, problem, args.reps, args.seed, tuned)
    with open(args.out, "w") as fh:
        bench.write_sweep_csv(rows, fh)
    for r in rows:
        print(f"{r.method:7s} {r.param}={r.value!s:>5}  error {r.mean_error:.4f} +- {r.std:.4f}")
    return 0


def cmd_table1(args) -> int:
    data_dir = Path(args.data_dir or os.environ.get(DATA_DIR_ENV) or "data")
    base = _params(args)
    space = _space(args)
    reports = []
    for key, name in enumerate(args.datasets):
        ds = bench.table1_dataset(name, data_dir)
        if ds is None:
            continue
        reports += bench.run_table1_dataset(ds, space, {"dsekl": base, "batch": base}, args.reps, args.seed,
                                            max_points=args.max_points, cv_epochs=args.cv_epochs,
                                            cv_batch_iters=args.cv_batch_iters, dataset_key=key)
        for r in reports[-2:]:
            print(f"{r.dataset:14s} {r.method:6s} {r.mean:.3f} +- {r.std:.3f}")
    bench.write_reports(reports, args.out)
    print(f"report -> {args.out}")
    return 0


def cmd_covertype(args) -> int:
    ds = load_libsvm(args.data)
    res = bench.run_covertype(ds, args.seed, args.subsample, args.workers, args.blocks, args.max_epochs,
                              args.stop_delta, args.batch_points or None, args.batch_iters, args.batch_eta0,
                              args.sigma)
    with open(args.metrics_out, "w", newline="") as fh:
        res.record.write_csv(fh)
    summary = {
        "evaluation_error": res.evaluation_error,
        "epochs": res.epochs,
        "stopped_early": res.record.stopped_early,
        "batch_size": res.batch_size,
        "blocks": res.blocks,
        "sizes": res.sizes,
        "validation_curve": [[c.epoch, c.validation_error] for c in res.record.epoch_checkpoints()],
        "batch_error": res.batch_error,
        "batch_n": res.batch_n,
    }
    Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    print(f"evaluation error {res.evaluation_error:.4f} after {res.epochs} epochs")
    if res.batch_error is not None:
        print(f"batch solver on {res.batch_n} points: {res.batch_error:.4f}")
    return 0


def cmd_speedup(args) -> int:
    ds = load_libsvm(args.data)
    if args.duplicate > 1:
        ds = stack([ds] * args.duplicate)
    cfg = TrainConfig(I=args.I, J=args.J, seed=args.seed, blocks=args.blocks)
    rows = measure_speedup(ds, KernelSpec.rbf(args.sigma), cfg, args.worker_counts, args.repeats)
    with open(args.out, "w", newline="") as fh:
        write_speedup_csv(rows, fh)
    for r in rows:
        print(f"{r.workers:3d} workers  {r.seconds:.4f}s  speedup {r.speedup:.2f}")
    return 0


def cmd_gridsearch(args) -> int:
    ds = load_libsvm(args.data, args.dim)
    params, best, table = bench.tune(args.method, ds, _space(args), _params(args), args.seed, args.cv_epochs,
                                     args.cv_batch_iters, args.n_jobs)
    with open(args.out, "w", newline="") as fh:
        write_cv_csv(table, fh)
    print("best: " + ", ".join(f"{k}={best[k]:g}" for k in ("lam", "sigma", "eta0", "I", "J"))
          + f"  (cv error {best['error']:.4f})")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    usage = _subparser(build_parser(), args.command).format_usage()
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"dsekl {args.command}: error: {exc}", file=sys.stderr)
        sys.stderr.write(usage)
        return 2
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
