"""Sparsely connected layers and the hidden-gate LSTM cell.

Both layer families keep their weights as MaskedMatrix instances. The
recurrent cell follows the usual f/i/o/g gate structure, except that each
gate first pushes the concatenated input through its own small hidden layer
(masked linear + ReLU, with dropout in train mode) before the gate
nonlinearity; only those hidden activations are regularized — the recurrent
state itself is never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .errors import ParameterError, ShapeError
from .numerics import MaskedMatrix

GATE_ORDER = ("f", "i", "o", "g")
MODES = ("train", "eval")


def _check_mode(mode):
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


def init_masked(out_width: int, in_width: int, rng, dtype=np.float64) -> MaskedMatrix:
    """Dense-masked matrix with weights uniform in ±1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(in_width)
    values = rng.uniform(-bound, bound, size=(out_width, in_width)).astype(dtype)
    return MaskedMatrix.dense(values)


@dataclass
class ScLayer:
    """Masked linear map, optional activation, inverted dropout on its output."""

    weights: MaskedMatrix
    bias: np.ndarray
    activation: str | None = "relu"
    dropout_rate: float = 0.0

    @property
    def in_width(self) -> int:
        return self.weights.cols

    @property
    def out_width(self) -> int:
        return self.weights.rows


@dataclass
class GateNet:
    """One control gate: hidden layer (ReLU) followed by a projection to state width."""

    hidden_w: MaskedMatrix
    hidden_b: np.ndarray
    out_w: MaskedMatrix
    out_b: np.ndarray


@dataclass
class HlstmCell:
    """LSTM cell whose four gates each contain one internal hidden layer."""

    gates: dict[str, GateNet]
    input_width: int
    state_width: int
    hidden_width: int
    dropout_rate: float = 0.0


def build_cell(input_width, state_width, hidden_width, dropout_rate, rng, dtype=np.float64) -> HlstmCell:
    u = input_width + state_width
    gates = {}
    for name in GATE_ORDER:
        gates[name] = GateNet(
            hidden_w=init_masked(hidden_width, u, rng, dtype),
            hidden_b=np.zeros(hidden_width, dtype=dtype),
            out_w=init_masked(state_width, hidden_width, rng, dtype),
            out_b=np.zeros(state_width, dtype=dtype),
        )
    return HlstmCell(gates, input_width, state_width, hidden_width, dropout_rate)


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, mode: str, rng=None) -> np.ndarray:
    """Zero units independently with probability `rate` and rescale survivors."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    return x * dropout_mask(np.shape(x), rate, rng).astype(x.dtype, copy=False)


def _apply_dropout(tape, x, rate, mode, rng):
    if mode == "eval" or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    m = dropout_mask(x.value.shape, rate, rng).astype(x.value.dtype, copy=False)
    return T.scale_by(tape, x, m)


def sc_apply(tape, layer: ScLayer, x, mode, rng, name: str):
    """Batched SC-layer forward on the tape."""
    w = tape.leaf(f"{name}.w", layer.weights.values)
    b = tape.leaf(f"{name}.b", layer.bias)
    h = T.affine(tape, x, w, b)
    if layer.activation is not None:
        if layer.activation != "relu":
            raise ParameterError(f"SC layers support relu or no activation, got {layer.activation!r}")
        h = T.relu(tape, h)
    return _apply_dropout(tape, h, layer.dropout_rate, mode, rng)


def sc_forward(layer: ScLayer, x: np.ndarray, mode: str, rng=None) -> np.ndarray:
    """Single-vector SC-layer forward pass."""
    _check_mode(mode)
    x = np.asarray(x)
    if x.shape != (layer.in_width,):
        raise ShapeError(f"input has shape {x.shape}, expected ({layer.in_width},)")
    tape = T.Tape()
    out = sc_apply(tape, layer, tape.constant(x[None, :]), mode, rng, "sc")
    return out.value[0]


def cell_step(tape, cell: HlstmCell, x_t, h_prev, c_prev, mode, rng, prefix="cell"):
    """One recurrent step on the tape; returns (h_t, c_t) nodes.

    u = [x_t, h_prev]; per gate a = relu(H·u + b_H) (dropout in train mode);
    f,i,o = sigmoid(Wˢ·a + b), g = tanh(Wˢ·a + b);
    c_t = f ⊗ c_prev + i ⊗ g; h_t = o ⊗ tanh(c_t).
    """
    u = T.concat_cols(tape, x_t, h_prev)
    pre = {}
    for name in GATE_ORDER:
        gate = cell.gates[name]
        hw = tape.leaf(f"{prefix}.{name}.hidden.w", gate.hidden_w.values)
        hb = tape.leaf(f"{prefix}.{name}.hidden.b", gate.hidden_b)
        a = T.relu(tape, T.affine(tape, u, hw, hb))
        a = _apply_dropout(tape, a, cell.dropout_rate, mode, rng)
        ow = tape.leaf(f"{prefix}.{name}.out.w", gate.out_w.values)
        ob = tape.leaf(f"{prefix}.{name}.out.b", gate.out_b)
        pre[name] = T.affine(tape, a, ow, ob)
    f = T.sigmoid_op(tape, pre["f"])
    i = T.sigmoid_op(tape, pre["i"])
    o = T.sigmoid_op(tape, pre["o"])
    g = T.tanh_op(tape, pre["g"])
    c_t = T.add(tape, T.mul(tape, f, c_prev), T.mul(tape, i, g))
    h_t = T.mul(tape, o, T.tanh_op(tape, c_t))
    return h_t, c_t


def _check_step_shapes(cell, x_t, h_prev, c_prev):
    if x_t.shape[-1] != cell.input_width:
        raise ShapeError(f"step input width {x_t.shape[-1]}, expected {cell.input_width}")
    for name, v in (("h_prev", h_prev), ("c_prev", c_prev)):
        if v.shape[-1] != cell.state_width:
            raise ShapeError(f"{name} width {v.shape[-1]}, expected {cell.state_width}")


def hlstm_step(cell: HlstmCell, x_t, h_prev, c_prev, mode: str, rng=None):
    """Single-vector recurrent step; returns (h_t, c_t) as arrays."""
    _check_mode(mode)
    x_t, h_prev, c_prev = (np.asarray(v) for v in (x_t, h_prev, c_prev))
    _check_step_shapes(cell, x_t, h_prev, c_prev)
    tape = T.Tape()
    h, c = cell_step(
        tape, cell, tape.constant(x_t[None, :]), tape.constant(h_prev[None, :]),
        tape.constant(c_prev[None, :]), mode, rng,
    )
    return h.value[0], c.value[0]


def unroll(tape, cell: HlstmCell, x, mode, rng, prefix="cell"):
    """Fold cell_step over x of shape (B, T, input_width) from zero state."""
    n, steps = x.shape[0], x.shape[1]
    if steps < 1:
        raise ParameterError("sequence must contain at least one step")
    zeros = np.zeros((n, cell.state_width), dtype=x.dtype)
    h = tape.constant(zeros)
    c = tape.constant(zeros.copy())
    for t in range(steps):
        x_t = tape.constant(np.ascontiguousarray(x[:, t, :]))
        h, c = cell_step(tape, cell, x_t, h, c, mode, rng, prefix)
    return h


def hlstm_unroll(cell: HlstmCell, sequence, mode: str, rng=None) -> np.ndarray:
    """Run the cell over a (T, input_width) sequence; returns the final hidden state."""
    _check_mode(mode)
    sequence = np.asarray(sequence)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise ParameterError(f"sequence must be a non-empty (T, features) array, got {sequence.shape}")
    if sequence.shape[1] != cell.input_width:
        raise ShapeError(f"step width {sequence.shape[1]}, expected {cell.input_width}")
    tape = T.Tape()
    h = unroll(tape, cell, sequence[None, :, :], mode, rng)
    return h.value[0]
