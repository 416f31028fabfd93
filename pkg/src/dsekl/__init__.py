"""Doubly stochastic empirical kernel learning for kernel SVMs."""

from .baselines import LinearModel, RKSFeatureMap, rks_transform, train_batch, train_fixed_subsample, train_rks
from .data import Dataset, generate_xor, load_libsvm, parse_libsvm, split, standardize, write_libsvm
from .kernels import GramBlock, KernelFamily, KernelSpec, eval_kernel, gram_block
from .objective import DualModel, SparseGradient, decision_function, error_rate, objective_value, subgradient
from .optimizer import RunRecord, StepSchedule, TrainConfig, sample_indices, train_serial
from .parallel import DampeningAccumulator, measure_speedup, partition_batches, train_parallel

__version__ = "0.1.0"

__all__ = [
    "DampeningAccumulator",
    "Dataset",
    "DualModel",
    "GramBlock",
    "KernelFamily",
    "KernelSpec",
    "LinearModel",
    "RKSFeatureMap",
    "RunRecord",
    "SparseGradient",
    "StepSchedule",
    "TrainConfig",
    "decision_function",
    "error_rate",
    "eval_kernel",
    "generate_xor",
    "gram_block",
    "load_libsvm",
    "measure_speedup",
    "objective_value",
    "parse_libsvm",
    "partition_batches",
    "rks_transform",
    "sample_indices",
    "split",
    "standardize",
    "subgradient",
    "train_batch",
    "train_fixed_subsample",
    "train_parallel",
    "train_rks",
    "train_serial",
    "write_libsvm",
]
