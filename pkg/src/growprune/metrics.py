"""Confusion matrices, classification metrics, and cost accounting.

Binary convention: class 0 is the positive (diabetic) class, class 1 healthy.
Three-class: classes 0 and 1 are the two condition types, the last class is
healthy. Rates that would divide by zero come back as None rather than
raising. Percent formatting rounds half away from zero to one decimal.

Cost convention: a matrix application costs 2 FLOPs (multiply + add) per
nonzero weight; activations, elementwise gate products, and biases are free.
Parameter totals cover masked matrices only — biases and the edge model's
dense head are excluded — while edge FLOPs do include the head applications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .models import Model

HEALTHY_BINARY = 1  # index of the healthy class in the binary task


@dataclass
class ConfusionMatrix:
    """k×k counts; rows are true labels, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ShapeError("confusion matrix counts must be non-negative")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(predictions, labels, k: int) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ShapeError(
            f"predictions shape {predictions.shape} != labels shape {labels.shape}")
    for name, arr in (("prediction", predictions), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise IndexError(f"{name} out of range for {k} classes")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


@dataclass
class BinaryMetrics:
    accuracy: float | None
    fpr: float | None
    fnr: float | None
    f1: float | None

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "fpr": self.fpr, "fnr": self.fnr, "f1": self.f1}


def binary_metrics(cm: ConfusionMatrix) -> BinaryMetrics:
    """Accuracy, FPR, FNR, F1 with class 0 = positive."""
    if cm.k != 2:
        raise ShapeError(f"binary metrics need a 2x2 matrix, got {cm.k}x{cm.k}")
    tp = int(cm.counts[0, 0])
    fn = int(cm.counts[0, 1])
    fp = int(cm.counts[1, 0])
    tn = int(cm.counts[1, 1])
    return BinaryMetrics(
        accuracy=_ratio(tp + tn, tp + fp + fn + tn),
        fpr=_ratio(fp, tn + fp),
        fnr=_ratio(fn, tp + fn),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
    )


@dataclass
class MulticlassMetrics:
    accuracy: float | None
    healthy_fpr: float | None
    fnr: list  # per non-healthy class, in class order

    def as_dict(self) -> dict:
        out = {"accuracy": self.accuracy, "healthy_fpr": self.healthy_fpr}
        for i, v in enumerate(self.fnr):
            out[f"fnr_class{i}"] = v
        return out


def multiclass_metrics(cm: ConfusionMatrix, healthy_class: int | None = None) -> MulticlassMetrics:
    """Accuracy, the healthy class's misclassification rate (its "FPR"), and
    the per-class miss rate for every condition class."""
    if cm.k < 3:
        raise ShapeError(f"multiclass metrics need k >= 3, got {cm.k}")
    healthy = cm.k - 1 if healthy_class is None else healthy_class
    totals = cm.row_totals()
    diag = np.diag(cm.counts)

    def row_miss(c):
        return _ratio(int(totals[c] - diag[c]), int(totals[c]))

    return MulticlassMetrics(
        accuracy=_ratio(int(diag.sum()), cm.total),
        healthy_fpr=row_miss(healthy),
        fnr=[row_miss(c) for c in range(cm.k) if c != healthy],
    )


def round_percent(x: float | None, decimals: int = 1) -> float | None:
    """Percentage rounded half away from zero (for table comparisons)."""
    if x is None:
        return None
    scaled = x * 100.0 * 10 ** decimals
    return math.copysign(math.floor(abs(scaled) + 0.5), scaled) / 10 ** decimals


@dataclass
class LayerCost:
    name: str
    dense: int
    nnz: int

    @property
    def sparsity(self) -> float:
        return 1.0 - self.nnz / self.dense


@dataclass
class CostReport:
    layers: list[LayerCost] = field(default_factory=list)
    total_dense: int = 0
    total_nnz: int = 0
    flops: int | None = None

    @property
    def sparsity(self) -> float:
        return 1.0 - self.total_nnz / self.total_dense


def count_params(model: Model) -> CostReport:
    """Dense and nonzero weight counts per masked matrix (biases/head excluded)."""
    report = CostReport()
    for name, m in model.masked_matrices().items():
        report.layers.append(LayerCost(name, m.dense_count, m.nnz))
        report.total_dense += m.dense_count
        report.total_nnz += m.nnz
    return report


def count_flops(model: Model, seq_len: int = 60) -> CostReport:
    """Inference FLOPs at 2 per nonzero weight per application.

    The server stack applies each matrix once; the edge cell applies every
    gate matrix at each of `seq_len` steps and the dense head once.
    """
    report = count_params(model)
    if model.kind == "server":
        report.flops = 2 * report.total_nnz
    else:
        report.flops = seq_len * 2 * report.total_nnz + 2 * model.head_w.size
    return report
