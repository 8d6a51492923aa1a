"""Flat key=value run configuration with per-kind defaults."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .synthesis import GrowPruneSchedule

# Defaults that differ between the two model kinds.
KIND_DEFAULTS = {
    "server": {"learning_rate": 0.005, "batch_size": 256, "plateau_patience": 50},
    "edge": {"learning_rate": 0.001, "batch_size": 64, "plateau_patience": 30},
}


@dataclass
class RunConfig:
    # run identity / IO
    model_kind: str = "server"
    num_classes: int = 2
    seed: int = 0
    dataset: str = ""
    out: str = ""
    report: str = ""
    format: str = "text"
    split: str = "test"
    timing: bool = False
    # synthetic data
    subjects_per_class: tuple | None = None
    duration_min_s: float = 3600.0
    duration_max_s: float = 5400.0
    separation: float = 1.0
    # model size (reference architectures by default; overridable for reduced runs)
    server_hidden_widths: tuple = (1024, 512, 256, 128, 64)
    edge_state_width: int = 96
    edge_hidden_width: int | None = None
    precision: str = "float64"
    # grow-and-prune schedule (None = per-kind default)
    seed_fill_rate: float = 0.2
    growth_ratio: float = 0.2
    growth_epochs: int = 3
    initial_pruning_ratio: float = 0.2
    pruning_ratio_floor: float = 0.01
    learning_rate: float | None = None
    lr_decay_factor: float = 10.0
    plateau_patience: int | None = None
    batch_size: int | None = None
    dropout_rate: float = 0.2
    momentum: float = 0.9
    max_epochs_per_phase: int = 500
    lr_decays_per_phase: int = 2
    recovery_tolerance: float = 0.001
    stop_at_sparsity: float | None = None
    stop_after_phase: int | None = None

    def resolved(self, key: str):
        value = getattr(self, key)
        if value is None and key in KIND_DEFAULTS["server"]:
            return KIND_DEFAULTS[self.model_kind][key]
        return value

    def schedule(self) -> GrowPruneSchedule:
        if self.model_kind not in KIND_DEFAULTS:
            raise ConfigError(f"model_kind must be server or edge, got {self.model_kind!r}")
        sched = GrowPruneSchedule(
            seed_fill_rate=self.seed_fill_rate,
            growth_ratio=self.growth_ratio,
            growth_epochs=self.growth_epochs,
            initial_pruning_ratio=self.initial_pruning_ratio,
            pruning_ratio_floor=self.pruning_ratio_floor,
            learning_rate=self.resolved("learning_rate"),
            lr_decay_factor=self.lr_decay_factor,
            plateau_patience=self.resolved("plateau_patience"),
            batch_size=self.resolved("batch_size"),
            dropout_rate=self.dropout_rate,
            momentum=self.momentum,
            max_epochs_per_phase=self.max_epochs_per_phase,
            lr_decays_per_phase=self.lr_decays_per_phase,
            recovery_tolerance=self.recovery_tolerance,
            stop_at_sparsity=self.stop_at_sparsity,
        )
        sched.validate()
        return sched

    def dtype(self):
        if self.precision == "float64":
            return np.float64
        if self.precision == "float32":
            return np.float32
        raise ConfigError(f"precision must be float64 or float32, got {self.precision!r}")


def _parse_tuple(text: str, cast):
    text = text.strip()
    if not text or text.lower() == "none":
        return None
    return tuple(cast(part) for part in text.split(",") if part.strip())


def _parse_optional(cast):
    def parse(text):
        return None if text.strip().lower() == "none" else cast(text)
    return parse


_PARSERS = {
    "subjects_per_class": lambda s: _parse_tuple(s, int),
    "server_hidden_widths": lambda s: _parse_tuple(s, int),
    "edge_hidden_width": _parse_optional(int),
    "learning_rate": _parse_optional(float),
    "plateau_patience": _parse_optional(int),
    "batch_size": _parse_optional(int),
    "stop_at_sparsity": _parse_optional(float),
    "stop_after_phase": _parse_optional(int),
    "timing": lambda s: s.strip().lower() in ("1", "true", "yes"),
}


def set_field(cfg: RunConfig, key: str, value: str) -> None:
    known = {f.name: f for f in fields(RunConfig)}
    if key not in known:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _PARSERS:
        parsed = _PARSERS[key](value)
    else:
        current_type = known[key].type
        try:
            if current_type in ("int", int):
                parsed = int(value)
            elif current_type in ("float", float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r} for config key {key!r}") from exc
    setattr(cfg, key, parsed)


def load_config(path) -> RunConfig:
    """Parse a `key=value` file ('#' starts a comment)."""
    cfg = RunConfig()
    apply_config_file(cfg, path)
    return cfg


def apply_config_file(cfg: RunConfig, path) -> None:
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        set_field(cfg, key.strip(), value.strip())


def apply_overrides(cfg: RunConfig, pairs) -> None:
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        set_field(cfg, key.strip(), value.strip())
