"""Binary model container and phase checkpoints.

Layout (all integers little-endian):

    magic "GPNN" | version u32 | kind u8 | num_classes u8 | flags u8 | pad u8
    input_width u32 | kind-specific section | optional scaler section

A masked matrix is stored as `M u32, N u32, nnz u64`, a row-major bit-packed
mask bitmap (MSB first, ceil(M*N/8) bytes), then the nnz float64 values in
row-major order of the set bits. Loading verifies the bitmap popcount against
the stored nnz and that the file is exactly consumed, so single-byte damage
surfaces as a corruption error. Weights are always written as float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .datapipe import Scaler
from .errors import CorruptionError, FormatError
from .layers import GATE_ORDER, GateNet, HlstmCell, ScLayer
from .models import Model
from .numerics import MaskedMatrix
from .synthesis import SynthesisState, TrainReport

MAGIC = b"GPNN"
VERSION = 1
_KINDS = {"server": 0, "edge": 1}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}
_ACTIVATIONS = {None: 0, "relu": 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATIONS.items()}


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def pack(self, fmt, *values):
        self.chunks.append(struct.pack("<" + fmt, *values))

    def raw(self, data: bytes):
        self.chunks.append(data)

    def floats(self, arr: np.ndarray):
        self.raw(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError("model file truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.raw(8 * n), dtype="<f8").copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CorruptionError(f"{len(self.data) - self.pos} trailing bytes in model file")


def _write_matrix(w: _Writer, m: MaskedMatrix):
    flat_mask = m.mask.ravel()
    values = np.ascontiguousarray(m.values, dtype=np.float64).ravel()[flat_mask.astype(bool)]
    w.pack("IIQ", m.rows, m.cols, m.nnz)
    w.raw(np.packbits(flat_mask).tobytes())
    w.floats(values)


def _read_matrix(r: _Reader) -> MaskedMatrix:
    rows, cols, nnz = r.unpack("IIQ")
    size = rows * cols
    bitmap = np.frombuffer(r.raw((size + 7) // 8), dtype=np.uint8)
    flat_mask = np.unpackbits(bitmap, count=size)
    if int(flat_mask.sum()) != nnz:
        raise CorruptionError(
            f"mask bitmap popcount {int(flat_mask.sum())} does not match stored nnz {nnz}")
    values = np.zeros(size, dtype=np.float64)
    values[flat_mask.astype(bool)] = r.floats(nnz)
    return MaskedMatrix(values.reshape(rows, cols), flat_mask.reshape(rows, cols))


def _write_vector(w: _Writer, v: np.ndarray):
    w.pack("I", len(v))
    w.floats(v)


def _read_vector(r: _Reader) -> np.ndarray:
    (n,) = r.unpack("I")
    return r.floats(n)


def model_bytes(model: Model, scaler: Scaler | None = None) -> bytes:
    w = _Writer()
    flags = 1 if scaler is not None and scaler.mins is not None else 0
    w.raw(MAGIC)
    w.pack("IBBBB", VERSION, _KINDS[model.kind], model.num_classes, flags, 0)
    w.pack("I", model.input_width)
    if model.kind == "server":
        w.pack("I", len(model.layers))
        for layer in model.layers:
            w.pack("IBd", layer.out_width, _ACTIVATIONS[layer.activation], layer.dropout_rate)
        for layer in model.layers:
            _write_matrix(w, layer.weights)
            _write_vector(w, layer.bias)
    else:
        cell = model.cell
        w.pack("IId", cell.state_width, cell.hidden_width, cell.dropout_rate)
        for name in GATE_ORDER:
            gate = cell.gates[name]
            _write_matrix(w, gate.hidden_w)
            _write_vector(w, gate.hidden_b)
            _write_matrix(w, gate.out_w)
            _write_vector(w, gate.out_b)
        w.pack("II", model.head_w.shape[0], model.head_w.shape[1])
        w.floats(model.head_w)
        _write_vector(w, model.head_b)
    if flags:
        w.pack("I", len(scaler.mins))
        w.floats(scaler.mins)
        w.floats(scaler.maxs)
    return w.getvalue()


def model_from_bytes(data: bytes) -> tuple[Model, Scaler | None]:
    r = _Reader(data)
    if r.raw(4) != MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, kind_id, num_classes, flags, _ = r.unpack("IBBBB")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version} (expected {VERSION})")
    if kind_id not in _KIND_NAMES:
        raise CorruptionError(f"unknown model kind id {kind_id}")
    kind = _KIND_NAMES[kind_id]
    (input_width,) = r.unpack("I")
    if kind == "server":
        (n_layers,) = r.unpack("I")
        specs = [r.unpack("IBd") for _ in range(n_layers)]
        layers = []
        for out_width, act_id, rate in specs:
            matrix = _read_matrix(r)
            bias = _read_vector(r)
            if matrix.rows != out_width or len(bias) != out_width:
                raise CorruptionError("layer table does not match stored matrices")
            layers.append(ScLayer(matrix, bias, _ACTIVATION_NAMES[act_id], rate))
        model = Model(kind="server", num_classes=num_classes, input_width=input_width,
                      layers=layers)
    else:
        state_width, hidden_width, rate = r.unpack("IId")
        gates = {}
        for name in GATE_ORDER:
            hidden_w = _read_matrix(r)
            hidden_b = _read_vector(r)
            out_w = _read_matrix(r)
            out_b = _read_vector(r)
            gates[name] = GateNet(hidden_w, hidden_b, out_w, out_b)
        cell = HlstmCell(gates, input_width, state_width, hidden_width, rate)
        head_rows, head_cols = r.unpack("II")
        head_w = r.floats(head_rows * head_cols).reshape(head_rows, head_cols)
        head_b = _read_vector(r)
        model = Model(kind="edge", num_classes=num_classes, input_width=input_width,
                      cell=cell, head_w=head_w, head_b=head_b)
    scaler = None
    if flags & 1:
        (n,) = r.unpack("I")
        scaler = Scaler()
        scaler.mins = r.floats(n)
        scaler.maxs = r.floats(n)
    r.done()
    return model, scaler


def save_model(model: Model, scaler: Scaler | None, path) -> None:
    Path(path).write_bytes(model_bytes(model, scaler))


def load_model(path) -> tuple[Model, Scaler | None]:
    return model_from_bytes(Path(path).read_bytes())


# --- phase checkpoints --------------------------------------------------------

def _checkpoint_paths(prefix):
    return Path(f"{prefix}.ckpt.model"), Path(f"{prefix}.ckpt.json")


def save_checkpoint(prefix, state: SynthesisState, model: Model, scaler, report: TrainReport):
    model_path, json_path = _checkpoint_paths(prefix)
    save_model(model, scaler, model_path)
    payload = {"state": state.to_dict(), "report": report.to_dict()}
    json_path.write_text(json.dumps(payload))


def load_checkpoint(prefix):
    model_path, json_path = _checkpoint_paths(prefix)
    model, scaler = load_model(model_path)
    payload = json.loads(json_path.read_text())
    return model, scaler, SynthesisState.from_dict(payload["state"]), TrainReport.from_dict(payload["report"])


def has_checkpoint(prefix) -> bool:
    return all(p.exists() for p in _checkpoint_paths(prefix))


def describe(path) -> str:
    """Human-readable header and per-matrix census of a model file."""
    model, scaler = load_model(path)
    lines = [f"kind: {model.kind}", f"classes: {model.num_classes}",
             f"input_width: {model.input_width}", f"format_version: {VERSION}"]
    for name, m in model.masked_matrices().items():
        lines.append(f"matrix {name}: {m.rows}x{m.cols} nnz={m.nnz} sparsity={m.sparsity:.4f}")
    lines.append(f"model sparsity: {model.sparsity():.4f}")
    lines.append(f"scaler: {'fitted' if scaler is not None else 'absent'}")
    return "\n".join(lines)
