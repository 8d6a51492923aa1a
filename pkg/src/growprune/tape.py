"""Minimal reverse-mode differentiation over batched arrays.

A `Tape` records every intermediate of a forward pass in creation order,
which for the model shapes used here is already a topological order, so the
backward sweep is a single reversed walk. Only the operations the two model
families need are provided; this is not a general autodiff system.

Leaf nodes wrap named parameters and are cached per tape, so a parameter
used at every step of an unrolled recurrence accumulates one gradient.
"""

from __future__ import annotations

import numpy as np

from . import _core
from .errors import ShapeError, StateError
from .numerics import GradientBuffer, sigmoid


class Var:
    """One node of the recorded computation: a value and its adjoint."""

    __slots__ = ("value", "grad", "_backward", "_tape_id")

    def __init__(self, value, tape_id):
        self.value = value
        self.grad = None
        self._backward = None
        self._tape_id = tape_id

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g


class Tape:
    def __init__(self):
        self._nodes: list[Var] = []
        self._leaves: dict[str, Var] = {}
        self._consumed = False
        self.batch_size: int | None = None

    def _record(self, value, backward=None) -> Var:
        node = Var(value, id(self))
        node._backward = backward
        self._nodes.append(node)
        return node

    def leaf(self, name: str, value: np.ndarray) -> Var:
        """Wrap a named parameter array; repeated calls return the same node."""
        node = self._leaves.get(name)
        if node is None:
            node = self._record(value)
            self._leaves[name] = node
        return node

    def constant(self, value: np.ndarray) -> Var:
        return self._record(value)

    def backward(self, loss: Var, seed: float = 1.0) -> None:
        """Reverse sweep from `loss`, filling .grad on every reachable node."""
        if not self._nodes:
            raise StateError("backward called with no recorded forward computation")
        if not isinstance(loss, Var) or loss._tape_id != id(self):
            raise StateError("loss was not produced by this tape")
        if self._consumed:
            raise StateError("backward already called on this tape")
        if np.ndim(loss.value) != 0:
            raise StateError("backward expects a scalar loss")
        self._consumed = True
        loss.grad = float(seed)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)

    def gradients(self, batch_size: int | None = None) -> GradientBuffer:
        """Leaf gradients as a GradientBuffer (sums over the mini-batch).

        The recorded loss is a batch mean, so leaf grads are scaled by the
        batch size to obtain per-sample sums.
        """
        n = batch_size if batch_size is not None else self.batch_size
        if n is None:
            raise StateError("batch size unknown; record a loss or pass batch_size")
        buf = GradientBuffer()
        buf.sample_count = int(n)
        for name, node in self._leaves.items():
            g = node.grad
            if g is None:
                g = np.zeros_like(node.value)
            buf.sums[name] = np.asarray(g, dtype=np.float64) * n
        return buf


def _check_vector_batch(x, what):
    if x.value.ndim != 2:
        raise ShapeError(f"{what} must be a (batch, features) array, got shape {x.value.shape}")


def affine(tape: Tape, x: Var, w: Var, b: Var) -> Var:
    """x @ W.T + b. The weight gradient is dense even if W is mask-zeroed."""
    _check_vector_batch(x, "affine input")
    if x.value.shape[1] != w.value.shape[1]:
        raise ShapeError(
            f"affine input width {x.value.shape[1]} does not match weight cols {w.value.shape[1]}"
        )
    out = tape._record(_core.affine(x.value, w.value, b.value))

    def backward(gy):
        gx, gw, gb = _core.affine_backward(np.asarray(gy), x.value, w.value)
        x.accumulate(gx)
        w.accumulate(gw)
        b.accumulate(gb)

    out._backward = backward
    return out


def relu(tape: Tape, x: Var) -> Var:
    out = tape._record(np.maximum(x.value, 0.0))

    def backward(gy):
        x.accumulate(gy * (x.value > 0))

    out._backward = backward
    return out


def sigmoid_op(tape: Tape, x: Var) -> Var:
    y = sigmoid(x.value)
    out = tape._record(y)

    def backward(gy):
        x.accumulate(gy * (y * (1.0 - y)))

    out._backward = backward
    return out


def tanh_op(tape: Tape, x: Var) -> Var:
    y = np.tanh(x.value)
    out = tape._record(y)

    def backward(gy):
        x.accumulate(gy * (1.0 - y * y))

    out._backward = backward
    return out


def add(tape: Tape, a: Var, b: Var) -> Var:
    out = tape._record(a.value + b.value)

    def backward(gy):
        a.accumulate(np.array(gy, copy=True))
        b.accumulate(np.array(gy, copy=True))

    out._backward = backward
    return out


def mul(tape: Tape, a: Var, b: Var) -> Var:
    out = tape._record(a.value * b.value)

    def backward(gy):
        a.accumulate(gy * b.value)
        b.accumulate(gy * a.value)

    out._backward = backward
    return out


def scale_by(tape: Tape, x: Var, factor: np.ndarray) -> Var:
    """Elementwise product with a constant (dropout masks)."""
    out = tape._record(x.value * factor)

    def backward(gy):
        x.accumulate(gy * factor)

    out._backward = backward
    return out


def concat_cols(tape: Tape, a: Var, b: Var) -> Var:
    _check_vector_batch(a, "concat operand")
    _check_vector_batch(b, "concat operand")
    split = a.value.shape[1]
    out = tape._record(np.concatenate([a.value, b.value], axis=1))

    def backward(gy):
        a.accumulate(np.ascontiguousarray(gy[:, :split]))
        b.accumulate(np.ascontiguousarray(gy[:, split:]))

    out._backward = backward
    return out


def softmax_cross_entropy_mean(tape: Tape, logits: Var, labels: np.ndarray) -> tuple[Var, np.ndarray]:
    """Mean cross-entropy of a batch of logits; returns (loss node, probs)."""
    _check_vector_batch(logits, "logits")
    z = logits.value
    n, k = z.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise IndexError(f"label out of range for {k} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    probs = np.exp(shifted - logsumexp[:, None])
    losses = logsumexp - shifted[np.arange(n), labels]
    out = tape._record(np.float64(losses.mean()))
    tape.batch_size = n

    def backward(gy):
        g = probs.copy()
        g[np.arange(n), labels] -= 1.0
        logits.accumulate(g * (gy / n))

    out._backward = backward
    return out, probs
