"""Sparse neural-network synthesis: gradient-based connection growth,
magnitude-based pruning, and the multi-rate sensor data pipeline feeding the
two reference classifiers (an SC-layer stack and a hidden-gate LSTM)."""

from ._core import BACKEND
from .numerics import GradientBuffer, MaskedMatrix, OptimizerState
from .synthesis import GrowPruneSchedule, TrainReport, grow, grow_and_prune, prune, seed_init

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GradientBuffer",
    "GrowPruneSchedule",
    "MaskedMatrix",
    "OptimizerState",
    "TrainReport",
    "grow",
    "grow_and_prune",
    "prune",
    "seed_init",
    "__version__",
]
