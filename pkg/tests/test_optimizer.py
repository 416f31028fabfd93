import io

import numpy as np
import pytest

from dsekl.baselines import train_batch
from dsekl.data import Dataset, generate_xor
from dsekl.kernels import KernelSpec, track_blocks
from dsekl.optimizer import (
    Checkpoint,
    RunRecord,
    StepSchedule,
    TrainConfig,
    iterations_per_epoch,
    make_streams,
    sample_indices,
    train_serial,
)

from .conftest import random_dataset

SPEC = KernelSpec.rbf(0.5)


def trace(dataset, config, **kw):
    steps = []
    model, record = train_serial(dataset, SPEC, config, on_step=lambda t, a: steps.append(a.copy()), **kw)
    return model, record, steps


def test_sample_full_set():
    assert sorted(sample_indices(5, 5, np.random.default_rng(0))) == [0, 1, 2, 3, 4]
    assert sample_indices(1, 1, np.random.default_rng(0)).tolist() == [0]


def test_sample_clamps_to_n():
    assert sorted(sample_indices(4, 10, np.random.default_rng(0))) == [0, 1, 2, 3]


def test_sample_deterministic_and_distinct():
    a = sample_indices(100, 10, np.random.default_rng(42))
    b = sample_indices(100, 10, np.random.default_rng(42))
    assert a.tolist() == b.tolist()
    assert len(set(a.tolist())) == 10


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(I=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=0.0)
    with pytest.raises(ValueError):
        TrainConfig(eta0=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(schedule="sqrt")
    assert TrainConfig(schedule="inverse_epoch").schedule is StepSchedule.INVERSE_EPOCH


def test_step_schedules():
    assert TrainConfig(eta0=2.0).step_size(4, 1) == 0.5
    assert TrainConfig(eta0=2.0, schedule="inverse_epoch").step_size(4, 2) == 1.0


def test_only_sampled_coordinates_move(xor100):
    cfg = TrainConfig(I=10, J=7, lam=1e-2, max_epochs=1, seed=5)
    _, _, steps = trace(xor100, cfg)
    # replay the expansion-index stream: second of the three seeded streams
    rng_cols = make_streams(5)[1]
    prev = np.zeros(100)
    for alpha in steps[:5]:
        cols = sample_indices(100, 7, rng_cols)
        outside = np.setdiff1d(np.arange(100), cols)
        assert np.array_equal(alpha[outside], prev[outside])
        prev = alpha


def test_bitwise_determinism(xor100):
    cfg = TrainConfig(I=20, J=15, lam=1e-3, max_epochs=3, seed=11)
    _, _, a = trace(xor100, cfg)
    _, _, b = trace(xor100, cfg)
    assert len(a) == len(b)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    _, _, c = trace(xor100, cfg.replace(seed=12))
    assert not np.array_equal(a[-1], c[-1])


def test_blocks_never_exceed_i_by_j(xor100):
    cfg = TrainConfig(I=30, J=12, max_epochs=2, seed=0)
    with track_blocks() as shapes:
        train_serial(xor100, SPEC, cfg, validation=xor100)
    assert shapes and all(s == (30, 12) for s in shapes)


def test_batch_sizes_clamped_to_n():
    ds = random_dataset(0, 8, 2)
    with track_blocks() as shapes:
        train_serial(ds, SPEC, TrainConfig(I=50, J=100, max_epochs=1))
    assert shapes == [(8, 8)]


def test_zero_epochs_leaves_alpha_zero(xor100):
    val = generate_xor(41, np.random.default_rng(1))
    model, record = train_serial(xor100, SPEC, TrainConfig(max_epochs=0), validation=val)
    assert not model.alpha.any()
    # everything is predicted +1, so the error is the share of -1 labels
    assert record.checkpoints[-1].validation_error == np.mean(val.y < 0)
    assert record.epochs_run == 0


def test_objective_decreases_on_xor(xor100):
    cfg = TrainConfig(I=20, J=20, lam=1e-3, eta0=1.0, max_epochs=10, seed=3)
    _, record = train_serial(xor100, SPEC, cfg)
    per_epoch = record.epoch_checkpoints()
    assert per_epoch[10].objective < per_epoch[1].objective


def test_checkpoint_cadence(xor100):
    cfg = TrainConfig(I=20, J=20, max_epochs=4, seed=0)
    _, record = train_serial(xor100, SPEC, cfg, validation=xor100)
    its = [c.iteration for c in record.checkpoints]
    per_epoch = iterations_per_epoch(100, 20)
    assert per_epoch == 5
    # iteration 0, the first ten non-epoch iterations, then one per epoch
    assert its == [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20]
    assert all(b > a for a, b in zip(its, its[1:]))
    errs = record.column("validation_error")
    assert np.all((errs >= 0) & (errs <= 1))


def test_stop_rule_halts_updates(xor100):
    cfg = TrainConfig(I=20, J=20, max_epochs=50, stop_weight_delta=1e9, seed=0)
    _, record, steps = trace(xor100, cfg)
    assert record.stopped_early and record.epochs_run == 1
    assert len(steps) == iterations_per_epoch(100, 20)


def test_non_binary_labels_rejected():
    ds = Dataset(np.zeros((3, 1)), [1.0, 0.0, -1.0])
    with pytest.raises(ValueError, match="labels"):
        train_serial(ds, SPEC, TrainConfig())


def test_divergence_aborts_with_diagnostics(xor100):
    cfg = TrainConfig(I=50, J=50, lam=1e200, eta0=1e200, max_epochs=5)
    with pytest.raises(FloatingPointError, match="iteration"):
        train_serial(xor100, SPEC, cfg)


def test_full_sampler_reproduces_batch_trajectory():
    ds = random_dataset(1, 40, 3)
    lam, iters = 1e-2, 25
    batch_steps, serial_steps = [], []
    train_batch(ds, SPEC, lam, iters, eta0=0.5, tol=0.0, on_step=lambda t, a: batch_steps.append(a.copy()))
    cfg = TrainConfig(I=40, J=40, lam=lam, eta0=0.5, max_epochs=iters, sampler="full")
    train_serial(ds, SPEC, cfg, on_step=lambda t, a: serial_steps.append(a.copy()))
    assert len(batch_steps) == len(serial_steps) == iters
    for a, b in zip(batch_steps, serial_steps):
        assert np.array_equal(a, b)


def test_run_record_rejects_non_increasing_iterations():
    r = RunRecord()
    r.add(Checkpoint(0, 0.0, 1.0, 0.5, 0.0))
    with pytest.raises(ValueError):
        r.add(Checkpoint(0, 0.0, 1.0, 0.5, 0.0))


def test_run_record_csv():
    r = RunRecord()
    r.add(Checkpoint(0, 0.0, float("nan"), 0.5, 0.0))
    r.add(Checkpoint(3, 1.0, 0.25, 0.125, 0.01))
    buf = io.StringIO()
    r.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "iteration,epoch,objective,validation_error,elapsed_seconds"
    assert lines[2].startswith("3,1.0,0.25,0.125,")
