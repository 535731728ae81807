"""Online accuracy metrics and network-internals diagnostics.

Accuracy is always *online*: each batch is scored before the network
trains on it. Per task, the average online task accuracy is the mean of
those batch accuracies over the task's steps; the total average online
accuracy is the mean over the whole lifetime and is the model-selection
metric.

The diagnostics are the mean absolute parameter value (over every
trainable tensor) and the effective rank of hidden feature matrices:
srank(spectrum) is the smallest k whose top-k singular values account for
at least 1 - delta of the spectrum sum, delta = 0.01.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .linalg import singular_values

log = logging.getLogger(__name__)

SRANK_DELTA = 0.01


def batch_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label; ties go to the lowest class."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"shape mismatch: logits {logits.shape}, labels {labels.shape}")
    return float(np.mean(logits.argmax(axis=1) == labels))


def avg_online_task_accuracy(
    per_step: np.ndarray, task_start: int, steps_per_task: int
) -> float:
    """Mean batch accuracy over steps [task_start, task_start + steps_per_task)."""
    per_step = np.asarray(per_step, dtype=np.float64)
    if task_start < 0 or task_start + steps_per_task > per_step.shape[0]:
        raise ValueError(
            f"need steps [{task_start}, {task_start + steps_per_task}) "
            f"but only {per_step.shape[0]} accuracies were recorded"
        )
    return float(per_step[task_start : task_start + steps_per_task].mean())


def total_avg_online_accuracy(per_step: np.ndarray) -> float:
    per_step = np.asarray(per_step, dtype=np.float64)
    if per_step.size == 0:
        raise ValueError("cannot average an empty accuracy sequence")
    return float(per_step.mean())


def mean_param_magnitude(params: nn.ParameterSet) -> float:
    """Mean |theta| over all trainable entries (weights, biases, affines)."""
    total = 0.0
    count = 0
    for arr in params.values.values():
        total += float(np.abs(arr).sum())
        count += arr.size
    return total / count


def srank(sing_vals: np.ndarray, delta: float = SRANK_DELTA) -> int:
    """Smallest k with (sum of top-k values) / (sum of all) >= 1 - delta."""
    s = np.asarray(sing_vals, dtype=np.float64)
    if s.size == 0 or np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("srank expects a non-empty, non-negative, descending spectrum")
    total = s.sum()
    if total == 0.0:
        log.warning("srank: all-zero spectrum, reporting rank 0")
        return 0
    ratios = np.cumsum(s) / total
    return int(np.searchsorted(ratios, 1.0 - delta) + 1)


def feature_srank_probe(
    spec: nn.NetworkSpec, params: nn.ParameterSet, probe: np.ndarray
) -> float:
    """Mean srank of the hidden-layer feature matrices on a probe batch."""
    mats = nn.hidden_feature_matrices(spec, params, probe)
    ranks = []
    for mat in mats:
        svals = singular_values(mat)
        if svals.sum() == 0.0:
            log.warning("feature_srank_probe: dead layer (all-zero activations)")
            ranks.append(0)
        else:
            ranks.append(srank(svals))
    return float(np.mean(ranks))


@dataclass
class TaskRow:
    task_index: int
    start_step: int
    avg_online_task_accuracy: float
    weight_magnitude: float
    feature_srank: float


@dataclass
class RunRecord:
    """Everything one experiment run produced."""

    seed: int
    config: dict
    task_rows: list[TaskRow] = field(default_factory=list)
    total_avg_online_accuracy: float = float("nan")
    per_step_accuracy: np.ndarray | None = None
    steps_completed: int = 0
    incomplete: bool = False
    wall_clock_seconds: float = 0.0
