"""Dense and mask-aware numeric primitives.

A sparse parameter is a weight matrix paired with a same-shape binary mask;
masked-out ("dormant") positions always hold the value zero, so forward
passes can use the stored array directly. Gradients, by contrast, are kept
dense on purpose: the growth step ranks dormant positions by their gradient
magnitude, so the derivative must be taken with respect to the unmasked
parameter. The optimizer step re-applies the mask afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ParameterError, ShapeError, StateError

ACTIVATION_KINDS = ("sigmoid", "tanh", "relu")


@dataclass
class MaskedMatrix:
    """An (M, N) weight matrix with a binary mask over its entries."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values)
        if self.values.dtype.kind != "f":
            self.values = self.values.astype(np.float64)
        self.mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if self.values.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {self.values.shape}")
        if self.values.shape != self.mask.shape:
            raise ShapeError(
                f"mask shape {self.mask.shape} does not match values shape {self.values.shape}"
            )
        if not np.isin(self.mask, (0, 1)).all():
            raise ParameterError("mask entries must be 0 or 1")
        if np.any(self.values[self.mask == 0] != 0.0):
            raise ParameterError("dormant (mask=0) entries must carry zero weight")

    @classmethod
    def dense(cls, values: np.ndarray) -> "MaskedMatrix":
        values = np.ascontiguousarray(values)
        return cls(values, np.ones(values.shape, dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.mask.sum())

    @property
    def dense_count(self) -> int:
        return self.values.size

    @property
    def sparsity(self) -> float:
        return 1.0 - self.nnz / self.dense_count

    def effective(self) -> np.ndarray:
        """values ⊗ mask; equal to `values` whenever the invariant holds."""
        return self.values * self.mask

    def apply_mask(self) -> None:
        self.values *= self.mask

    def check(self) -> None:
        """Assert the dormant-entries-are-zero invariant."""
        if np.any(self.values[self.mask == 0] != 0.0):
            raise StateError("mask consistency violated: nonzero weight at a dormant position")

    def copy(self) -> "MaskedMatrix":
        return MaskedMatrix(self.values.copy(), self.mask.copy())


class GradientBuffer:
    """Per-parameter gradient accumulators plus the number of samples seen.

    Accumulators hold the *sum* of per-sample gradients; `mean(name)` divides
    by `sample_count`. Buffers from successive mini-batches merge additively,
    which is how an epoch-level average gradient is assembled for growth.
    """

    def __init__(self):
        self.sums: dict[str, np.ndarray] = {}
        self.sample_count: int = 0

    def add(self, name: str, grad_sum: np.ndarray) -> None:
        if name in self.sums:
            if self.sums[name].shape != grad_sum.shape:
                raise ShapeError(
                    f"gradient shape {grad_sum.shape} does not match "
                    f"existing accumulator {self.sums[name].shape} for {name!r}"
                )
            self.sums[name] += grad_sum
        else:
            self.sums[name] = np.array(grad_sum, copy=True)

    def merge(self, other: "GradientBuffer") -> None:
        for name, g in other.sums.items():
            self.add(name, g)
        self.sample_count += other.sample_count

    def mean(self, name: str) -> np.ndarray:
        if self.sample_count == 0:
            raise StateError("average gradient undefined: no samples accumulated")
        return self.sums[name] / self.sample_count

    def names(self):
        return self.sums.keys()


@dataclass
class OptimizerState:
    """Momentum-SGD state: learning rate, momentum, per-parameter velocities."""

    learning_rate: float
    momentum: float = 0.9
    velocities: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")

    def velocity(self, name: str, like: np.ndarray) -> np.ndarray:
        v = self.velocities.get(name)
        if v is None:
            v = np.zeros_like(like)
            self.velocities[name] = v
        elif v.shape != like.shape:
            raise ShapeError(f"velocity shape {v.shape} does not match parameter {like.shape}")
        return v


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    """Elementwise sigmoid / tanh / relu."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split on sign so exp never sees a large positive argument.
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def masked_linear(layer: MaskedMatrix, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(W ⊗ Msk) · x + bias for a single input vector x of length N."""
    bias = np.asarray(bias)
    x = np.asarray(x)
    if x.shape != (layer.cols,):
        raise ShapeError(f"input has shape {x.shape}, expected ({layer.cols},)")
    if bias.shape != (layer.rows,):
        raise ShapeError(f"bias has shape {bias.shape}, expected ({layer.rows},)")
    return layer.values @ x + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax (works on vectors and batches)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[np.ndarray, float]:
    """Probabilities and −ln p[label] for a single logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    if not 0 <= label < k:
        raise IndexError(f"label {label} out of range for {k} classes")
    z = logits - logits.max()
    logsumexp = np.log(np.exp(z).sum())
    probs = np.exp(z - logsumexp)
    loss = float(logsumexp - z[label])
    return probs, loss


def sgd_step(params: dict, grads: GradientBuffer, opt: OptimizerState) -> dict:
    """Momentum update over a parameter dict, in place.

    `params` maps names to MaskedMatrix (weights) or plain arrays (biases,
    unmasked layers). Masked parameters get their mask re-applied after the
    step so dormant entries stay exactly zero; velocities stay dense.
    """
    for name, p in params.items():
        g = grads.mean(name)
        if isinstance(p, MaskedMatrix):
            if g.shape != p.values.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.values.shape}")
            v = opt.velocity(name, p.values)
            _core.momentum_update(p.values, v, g, p.mask, opt.learning_rate, opt.momentum)
        else:
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v = opt.velocity(name, p)
            _core.momentum_update(p, v, g, None, opt.learning_rate, opt.momentum)
    return params
