"""The two reference classifiers and their shared parameter interface.

* server kind: a stack of SC layers over a flattened window vector.
* edge kind: one hidden-gate LSTM cell stepped over the window's time steps,
  with a small dense (unmasked) linear head producing the logits. The head
  is trained but excluded from growth, pruning, and parameter accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .errors import ParameterError, ShapeError
from .layers import HlstmCell, ScLayer, build_cell, init_masked, sc_apply, unroll
from .numerics import MaskedMatrix

SERVER_INPUT_WIDTH = 3712
SERVER_HIDDEN_WIDTHS = (1024, 512, 256, 128, 64)
EDGE_INPUT_WIDTH = 40
EDGE_STATE_WIDTH = 96
SUPPORTED_CLASSES = (2, 3)


@dataclass
class Model:
    kind: str
    num_classes: int
    input_width: int
    layers: list[ScLayer] = field(default_factory=list)
    cell: HlstmCell | None = None
    head_w: np.ndarray | None = None
    head_b: np.ndarray | None = None

    def parameters(self) -> dict:
        """Ordered name → MaskedMatrix | ndarray map of every trainable parameter."""
        params: dict = {}
        if self.kind == "server":
            for i, layer in enumerate(self.layers):
                params[f"sc{i}.w"] = layer.weights
                params[f"sc{i}.b"] = layer.bias
        else:
            for name, gate in self.cell.gates.items():
                params[f"cell.{name}.hidden.w"] = gate.hidden_w
                params[f"cell.{name}.hidden.b"] = gate.hidden_b
                params[f"cell.{name}.out.w"] = gate.out_w
                params[f"cell.{name}.out.b"] = gate.out_b
            params["head.w"] = self.head_w
            params["head.b"] = self.head_b
        return params

    def masked_matrices(self) -> dict[str, MaskedMatrix]:
        return {k: v for k, v in self.parameters().items() if isinstance(v, MaskedMatrix)}

    def sparsity(self) -> float:
        mats = self.masked_matrices().values()
        dense = sum(m.dense_count for m in mats)
        nnz = sum(m.nnz for m in mats)
        return 1.0 - nnz / dense

    def check_masks(self) -> None:
        for m in self.masked_matrices().values():
            m.check()


def _check_classes(num_classes):
    if num_classes not in SUPPORTED_CLASSES:
        raise ParameterError(f"num_classes must be one of {SUPPORTED_CLASSES}, got {num_classes}")


def build_server(num_classes, rng, input_width=SERVER_INPUT_WIDTH,
                 hidden_widths=SERVER_HIDDEN_WIDTHS, dropout_rate=0.2,
                 dtype=np.float64) -> Model:
    """SC-layer stack; hidden layers use ReLU + dropout, the last layer is linear."""
    _check_classes(num_classes)
    layers = []
    widths = list(hidden_widths) + [num_classes]
    fan_in = input_width
    for i, width in enumerate(widths):
        last = i == len(widths) - 1
        layers.append(ScLayer(
            weights=init_masked(width, fan_in, rng, dtype),
            bias=np.zeros(width, dtype=dtype),
            activation=None if last else "relu",
            dropout_rate=0.0 if last else dropout_rate,
        ))
        fan_in = width
    return Model(kind="server", num_classes=num_classes, input_width=input_width, layers=layers)


def build_edge(num_classes, rng, input_width=EDGE_INPUT_WIDTH, state_width=EDGE_STATE_WIDTH,
               hidden_width=None, dropout_rate=0.2, dtype=np.float64) -> Model:
    """One recurrent cell plus a dense linear head over the final hidden state."""
    _check_classes(num_classes)
    if hidden_width is None:
        hidden_width = state_width
    cell = build_cell(input_width, state_width, hidden_width, dropout_rate, rng, dtype)
    head = init_masked(num_classes, state_width, rng, dtype)
    return Model(
        kind="edge", num_classes=num_classes, input_width=input_width, cell=cell,
        head_w=np.ascontiguousarray(head.values), head_b=np.zeros(num_classes, dtype=dtype),
    )


def forward_batch(tape, model: Model, x: np.ndarray, mode: str, rng=None) -> T.Var:
    """Record a batched forward pass on `tape`; returns the logits node."""
    if model.kind == "server":
        if x.ndim != 2 or x.shape[1] != model.input_width:
            raise ShapeError(f"server input must be (batch, {model.input_width}), got {x.shape}")
        out = tape.constant(x)
        for i, layer in enumerate(model.layers):
            out = sc_apply(tape, layer, out, mode, rng, f"sc{i}")
        return out
    if x.ndim != 3 or x.shape[2] != model.input_width:
        raise ShapeError(f"edge input must be (batch, steps, {model.input_width}), got {x.shape}")
    h = unroll(tape, model.cell, x, mode, rng)
    w = tape.leaf("head.w", model.head_w)
    b = tape.leaf("head.b", model.head_b)
    return T.affine(tape, h, w, b)


def forward(model: Model, instance: np.ndarray, mode: str = "eval", rng=None) -> np.ndarray:
    """Logits for one instance (vector for server, (T, features) for edge) or a batch."""
    x = np.asarray(instance)
    single = (model.kind == "server" and x.ndim == 1) or (model.kind == "edge" and x.ndim == 2)
    if single:
        x = x[None, ...]
    logits = forward_batch(T.Tape(), model, x, mode, rng).value
    return logits[0] if single else logits


def predict(model: Model, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Eval-mode argmax predictions over a batch, computed in chunks."""
    out = []
    for start in range(0, x.shape[0], batch_size):
        logits = forward_batch(T.Tape(), model, x[start:start + batch_size], "eval")
        out.append(np.argmax(logits.value, axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def snapshot(model: Model) -> dict:
    """Deep copy of all parameter arrays (masks included)."""
    snap = {}
    for name, p in model.parameters().items():
        if isinstance(p, MaskedMatrix):
            snap[name] = (p.values.copy(), p.mask.copy())
        else:
            snap[name] = p.copy()
    return snap


def restore(model: Model, snap: dict) -> None:
    """Copy a snapshot back into the model's existing arrays, in place."""
    for name, p in model.parameters().items():
        if isinstance(p, MaskedMatrix):
            values, mask = snap[name]
            np.copyto(p.values, values)
            np.copyto(p.mask, mask)
        else:
            np.copyto(p, snap[name])
