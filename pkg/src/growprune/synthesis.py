"""Grow-and-prune network synthesis.

The flow starts from a randomly sparsified seed, grows connections whose
epoch-averaged gradient magnitude ranks in the top fraction of their matrix,
trains to a validation plateau, then iteratively prunes the lowest-magnitude
active weights, retraining after each cut and halving the pruning ratio
whenever accuracy cannot be recovered. Growth and pruning act on weight
matrices only; biases (and the edge model's head) are never masked.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import tape as T
from .errors import DataError, ParameterError
from .models import Model, forward_batch, restore, snapshot
from .numerics import GradientBuffer, MaskedMatrix, OptimizerState, sgd_step


@dataclass
class GrowPruneSchedule:
    """Every knob of the synthesis flow, defaulting to the server recipe."""

    seed_fill_rate: float = 0.2
    growth_ratio: float = 0.2
    growth_epochs: int = 3
    initial_pruning_ratio: float = 0.2
    pruning_ratio_floor: float = 0.01
    learning_rate: float = 0.005
    lr_decay_factor: float = 10.0
    plateau_patience: int = 50
    batch_size: int = 256
    dropout_rate: float = 0.2
    momentum: float = 0.9
    max_epochs_per_phase: int = 500
    lr_decays_per_phase: int = 2
    recovery_tolerance: float = 0.001
    stop_at_sparsity: float | None = None

    def validate(self) -> None:
        if not 0.0 < self.seed_fill_rate <= 1.0:
            raise ParameterError(f"seed fill rate must be in (0, 1], got {self.seed_fill_rate}")
        if not 0.0 < self.growth_ratio < 1.0:
            raise ParameterError(f"growth ratio must be in (0, 1), got {self.growth_ratio}")
        if not 0.0 < self.initial_pruning_ratio < 1.0:
            raise ParameterError(
                f"pruning ratio must be in (0, 1), got {self.initial_pruning_ratio}"
            )
        if self.pruning_ratio_floor <= 0:
            raise ParameterError("pruning ratio floor must be positive")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be positive")
        if self.growth_epochs < 0 or self.plateau_patience < 1 or self.batch_size < 1:
            raise ParameterError("growth_epochs >= 0, patience >= 1, batch_size >= 1 required")

    @classmethod
    def edge_defaults(cls) -> "GrowPruneSchedule":
        return cls(learning_rate=0.001, batch_size=64, plateau_patience=30)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float
    sparsity: float
    seconds: float = 0.0


@dataclass
class Event:
    phase: str
    kind: str
    detail: str


EPOCH_COLUMNS = ("phase", "epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr", "sparsity")


class TrainReport:
    """Per-epoch training trajectory plus phase-level events and the final mask census."""

    def __init__(self):
        self.epochs: list[EpochRecord] = []
        self.events: list[Event] = []
        self.best_val_acc: float | None = None

    def add_epoch(self, rec: EpochRecord) -> None:
        self.epochs.append(rec)

    def add_event(self, phase: str, kind: str, detail: str) -> None:
        self.events.append(Event(phase, kind, detail))

    def record_census(self, model: Model) -> None:
        for name, m in model.masked_matrices().items():
            self.add_event("final", "census", f"layer={name};dense={m.dense_count};nnz={m.nnz}")

    def final_sparsity(self) -> float | None:
        return self.epochs[-1].sparsity if self.epochs else None

    def epochs_csv(self, timing: bool = False) -> str:
        cols = EPOCH_COLUMNS + (("seconds",) if timing else ())
        lines = [",".join(cols)]
        for r in self.epochs:
            row = [r.phase, str(r.epoch), repr(r.train_loss), repr(r.train_acc),
                   repr(r.val_loss), repr(r.val_acc), repr(r.lr), repr(r.sparsity)]
            if timing:
                row.append(repr(r.seconds))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def events_csv(self) -> str:
        lines = ["phase,kind,detail"]
        lines += [f"{e.phase},{e.kind},{e.detail}" for e in self.events]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "epochs": [vars(r).copy() for r in self.epochs],
            "events": [vars(e).copy() for e in self.events],
            "best_val_acc": self.best_val_acc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        report = cls()
        report.epochs = [EpochRecord(**r) for r in d["epochs"]]
        report.events = [Event(**e) for e in d["events"]]
        report.best_val_acc = d["best_val_acc"]
        return report


@dataclass
class SplitArrays:
    """Encoded train/validation(/test) arrays for one model kind."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray | None = None
    y_test: np.ndarray | None = None

    def validate(self) -> None:
        if len(self.y_train) == 0 or len(self.y_val) == 0:
            raise DataError("training and validation splits must be non-empty")


def seed_init(model: Model, fill_rate: float, rng) -> Model:
    """Keep a uniformly random round(fill_rate·M·N) positions per weight matrix."""
    if not 0.0 < fill_rate <= 1.0:
        raise ParameterError(f"fill rate must be in (0, 1], got {fill_rate}")
    for matrix in model.masked_matrices().values():
        size = matrix.dense_count
        keep = int(round(fill_rate * size))
        flat = np.zeros(size, dtype=np.uint8)
        flat[rng.permutation(size)[:keep]] = 1
        matrix.mask[...] = flat.reshape(matrix.mask.shape)
        matrix.apply_mask()
    return model


def grow(matrix: MaskedMatrix, avg_grad: np.ndarray, growth_ratio: float,
         learning_rate: float) -> MaskedMatrix:
    """Activate dormant positions whose |avg_grad| beats the ⌈α·M·N⌉-th largest.

    The threshold is taken over the whole matrix (active entries included)
    and the comparison is strict, so ties at the threshold stay dormant.
    Afterwards every active entry receives the literal `+η·avg_grad` nudge,
    which initializes a newly grown weight to η times its gradient.
    """
    if not 0.0 < growth_ratio < 1.0:
        raise ParameterError(f"growth ratio must be in (0, 1), got {growth_ratio}")
    g = np.asarray(avg_grad, dtype=np.float64)
    if g.shape != matrix.values.shape:
        raise ParameterError(f"gradient shape {g.shape} != matrix shape {matrix.values.shape}")
    size = matrix.dense_count
    k = math.ceil(growth_ratio * size)
    mags = np.abs(g)
    thres = np.partition(mags.ravel(), size - k)[size - k]
    matrix.mask |= (mags > thres).astype(np.uint8)
    matrix.values += learning_rate * g * matrix.mask
    return matrix


def prune(matrix: MaskedMatrix, pruning_ratio: float) -> MaskedMatrix:
    """Remove the bottom ⌈β·nnz⌉ active weights by magnitude.

    The cut point is the magnitude of the smallest weight that survives;
    active entries strictly below it are zeroed and masked out, so ties at
    the boundary are kept. Dormant entries never re-enter here.
    """
    if not 0.0 < pruning_ratio < 1.0:
        raise ParameterError(f"pruning ratio must be in (0, 1), got {pruning_ratio}")
    active = matrix.mask.astype(bool)
    nnz = int(active.sum())
    if nnz == 0:
        return matrix
    mags = np.abs(matrix.values[active])
    k = math.ceil(pruning_ratio * nnz)
    thres = np.inf if k >= nnz else np.partition(mags, k)[k]
    drop = active & (np.abs(matrix.values) < thres)
    matrix.mask[drop] = 0
    matrix.values[drop] = 0.0
    return matrix


class PlateauDecay:
    """Learning-rate plateau policy.

    Counts epochs since the last new best validation accuracy. At the start
    of an epoch preceded by `patience` consecutive misses the rate is divided
    by `factor` and that epoch becomes the new baseline, so with patience 3
    and flat accuracy the decays land at epochs 4, 8, 12, ...
    """

    def __init__(self, opt: OptimizerState, patience: int, factor: float, max_decays: int):
        self.opt = opt
        self.patience = patience
        self.factor = factor
        self.max_decays = max_decays
        self.misses = 0
        self.decays = 0

    def exhausted(self) -> bool:
        """True when another decay is due but the per-phase budget is spent."""
        return self.misses >= self.patience and self.decays >= self.max_decays

    def epoch_start(self) -> bool:
        if self.misses >= self.patience:
            self.opt.learning_rate /= self.factor
            self.decays += 1
            self.misses = -1
            return True
        return False

    def epoch_end(self, improved: bool) -> None:
        self.misses = 0 if improved else self.misses + 1


def evaluate(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 512):
    """Eval-mode mean cross-entropy and accuracy."""
    n = len(y)
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        tp = T.Tape()
        logits = forward_batch(tp, model, xb, "eval")
        loss, probs = T.softmax_cross_entropy_mean(tp, logits, yb)
        loss_sum += float(loss.value) * len(yb)
        correct += int((probs.argmax(axis=1) == yb).sum())
    return loss_sum / n, correct / n


def train_epoch(model: Model, data: SplitArrays, opt: OptimizerState, batch_size: int,
                rng, accumulate: GradientBuffer | None = None):
    """One shuffled mini-batch SGD epoch; optionally accumulates epoch gradients."""
    n = len(data.y_train)
    perm = rng.permutation(n)
    params = model.parameters()
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        xb, yb = data.x_train[idx], data.y_train[idx]
        tp = T.Tape()
        logits = forward_batch(tp, model, xb, "train", rng)
        loss, probs = T.softmax_cross_entropy_mean(tp, logits, yb)
        tp.backward(loss)
        buf = tp.gradients()
        sgd_step(params, buf, opt)
        model.check_masks()
        if accumulate is not None:
            accumulate.merge(buf)
        loss_sum += float(loss.value) * len(idx)
        correct += int((probs.argmax(axis=1) == yb).sum())
    return loss_sum / n, correct / n


def train_to_plateau(model: Model, data: SplitArrays, opt: OptimizerState, patience: int,
                     max_epochs: int, rng, *, batch_size: int = 256,
                     lr_decay_factor: float = 10.0, max_decays: int = 2,
                     report: TrainReport | None = None, phase: str = "train",
                     epoch_offset: int = 0) -> float:
    """Train until the plateau budget is spent; leaves the best-epoch weights in place.

    The incoming model's validation accuracy seeds the best score, so a run
    that never improves returns the model unchanged. Returns the best
    validation accuracy.
    """
    data.validate()
    report = report if report is not None else TrainReport()
    _, best_acc = evaluate(model, data.x_val, data.y_val)
    best_snap = snapshot(model)
    report.add_event(phase, "baseline", f"val_acc={best_acc!r}")
    policy = PlateauDecay(opt, patience, lr_decay_factor, max_decays)
    for epoch in range(1, max_epochs + 1):
        if policy.exhausted():
            break
        if policy.epoch_start():
            report.add_event(phase, "lr_decay", f"epoch={epoch_offset + epoch};lr={opt.learning_rate!r}")
        t0 = time.perf_counter()
        train_loss, train_acc = train_epoch(model, data, opt, batch_size, rng)
        val_loss, val_acc = evaluate(model, data.x_val, data.y_val)
        seconds = time.perf_counter() - t0
        report.add_epoch(EpochRecord(phase, epoch_offset + epoch, train_loss, train_acc,
                                     val_loss, val_acc, opt.learning_rate, model.sparsity(),
                                     seconds))
        improved = val_acc > best_acc
        if improved:
            best_acc = val_acc
            best_snap = snapshot(model)
        policy.epoch_end(improved)
    restore(model, best_snap)
    return best_acc


@dataclass
class SynthesisState:
    """Resumable position inside the synthesis flow (checkpointed at phase ends)."""

    phase: int = 0
    beta: float = 0.0
    baseline_acc: float = 0.0
    epoch: int = 0
    done: bool = False

    def to_dict(self) -> dict:
        return {"phase": self.phase, "beta": self.beta, "baseline_acc": self.baseline_acc,
                "epoch": self.epoch, "done": self.done}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisState":
        return cls(**d)


def grow_and_prune(model: Model, data: SplitArrays, sched: GrowPruneSchedule, rng,
                   report: TrainReport | None = None, state: SynthesisState | None = None,
                   checkpoint_cb=None, stop_after_phase: int | None = None):
    """Full synthesis flow: growth epochs, plateau training, iterative pruning.

    Phase numbering: 0 = growth, 1 = initial plateau, 2.. = prune iterations.
    Each phase consumes exactly one child generator spawned from `rng`, so a
    run resumed from a phase checkpoint replays identically. `checkpoint_cb`
    (if given) is called as cb(state, model, report) after every phase.
    """
    sched.validate()
    data.validate()
    report = report if report is not None else TrainReport()
    if state is None:
        state = SynthesisState(beta=sched.initial_pruning_ratio)
    for _ in range(state.phase):
        rng.spawn(1)  # fast-forward the per-phase generator stream on resume

    def finish_phase():
        state.phase += 1
        if checkpoint_cb is not None:
            checkpoint_cb(state, model, report)
        return stop_after_phase is not None and state.phase > stop_after_phase

    def plateau(phase_name, opt, phase_rng):
        return train_to_plateau(
            model, data, opt, sched.plateau_patience, sched.max_epochs_per_phase, phase_rng,
            batch_size=sched.batch_size, lr_decay_factor=sched.lr_decay_factor,
            max_decays=sched.lr_decays_per_phase, report=report, phase=phase_name,
            epoch_offset=state.epoch)

    def bump_epochs():
        state.epoch = report.epochs[-1].epoch if report.epochs else state.epoch

    if state.phase == 0:
        phase_rng = rng.spawn(1)[0]
        for ge in range(1, sched.growth_epochs + 1):
            opt = OptimizerState(sched.learning_rate, sched.momentum)
            epoch_grads = GradientBuffer()
            t0 = time.perf_counter()
            train_loss, train_acc = train_epoch(model, data, opt, sched.batch_size,
                                                phase_rng, accumulate=epoch_grads)
            grown = 0
            for name, matrix in model.masked_matrices().items():
                before = matrix.nnz
                grow(matrix, epoch_grads.mean(name), sched.growth_ratio, opt.learning_rate)
                grown += matrix.nnz - before
            model.check_masks()
            val_loss, val_acc = evaluate(model, data.x_val, data.y_val)
            state.epoch += 1
            report.add_epoch(EpochRecord("growth", state.epoch, train_loss, train_acc,
                                         val_loss, val_acc, opt.learning_rate,
                                         model.sparsity(), time.perf_counter() - t0))
            report.add_event("growth", "grow", f"epoch={ge};activated={grown}")
        if finish_phase():
            return model, report, state
    if state.phase == 1:
        phase_rng = rng.spawn(1)[0]
        opt = OptimizerState(sched.learning_rate, sched.momentum)
        state.baseline_acc = plateau("plateau", opt, phase_rng)
        bump_epochs()
        report.add_event("plateau", "best", f"val_acc={state.baseline_acc!r}")
        if finish_phase():
            return model, report, state
    while state.beta >= sched.pruning_ratio_floor:
        if sched.stop_at_sparsity is not None and model.sparsity() >= sched.stop_at_sparsity:
            report.add_event("prune", "stop", f"sparsity={model.sparsity()!r}")
            break
        phase_name = f"prune{state.phase - 1}"
        phase_rng = rng.spawn(1)[0]
        pre_snap = snapshot(model)
        removed = 0
        for matrix in model.masked_matrices().values():
            before = matrix.nnz
            prune(matrix, state.beta)
            removed += before - matrix.nnz
        model.check_masks()
        report.add_event(phase_name, "prune", f"beta={state.beta!r};removed={removed}")
        opt = OptimizerState(sched.learning_rate, sched.momentum)
        recovered = plateau(phase_name, opt, phase_rng)
        bump_epochs()
        if removed > 0 and recovered >= state.baseline_acc - sched.recovery_tolerance:
            state.baseline_acc = recovered
            report.add_event(phase_name, "accept",
                             f"val_acc={recovered!r};sparsity={model.sparsity()!r}")
        else:
            restore(model, pre_snap)
            state.beta /= 2.0
            report.add_event(phase_name, "reject",
                             f"val_acc={recovered!r};next_beta={state.beta!r}")
        if finish_phase():
            return model, report, state
    state.done = True
    report.best_val_acc = state.baseline_acc
    report.add_event("final", "best", f"val_acc={state.baseline_acc!r}")
    report.record_census(model)
    if checkpoint_cb is not None:
        checkpoint_cb(state, model, report)
    return model, report, state
