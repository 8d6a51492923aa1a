"""Synthetic labeled subjects standing in for real sensor recordings.

Each stream is a first-order autoregressive process whose mean is shifted by
a class-dependent amount; demographics get analogous per-class offsets. The
`separation` knob scales every class- and subject-specific component, so at
separation 0 all subjects are statistically identical (a trained classifier
should sit at chance level) while at 1 the classes are comfortably separable.
The emitted schema is exactly the real-data schema, so every downstream
transform runs unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .datapipe import CHANNELS, DEMOGRAPHIC_FIELDS, Stream, Subject
from .errors import ParameterError

# Class "positions" on the latent severity axis; index = label.
CLASS_CENTROIDS = {
    2: (1.0, -1.0),          # diabetic, healthy
    3: (1.0, 0.4, -1.0),     # type-1, type-2, healthy
}
DEFAULT_CENSUS = {2: (27, 25), 3: (14, 13, 25)}

# Demographics: (population base, per-class shift, subject spread).
_DEMO_PARAMS = {
    "age": (45.0, 8.0, 6.0),
    "gender": (0.5, 0.0, 0.5),
    "height": (170.0, 0.0, 9.0),
    "weight": (78.0, 7.0, 8.0),
    "relatives_with_diabetes": (0.5, 0.35, 0.5),
    "smoking": (0.5, 0.1, 0.5),
    "drinking": (0.5, 0.1, 0.5),
}


@dataclass
class SynthConfig:
    num_classes: int = 2
    subjects_per_class: tuple | None = None
    duration_min_s: float = 3600.0
    duration_max_s: float = 5400.0
    separation: float = 1.0
    ar_coeff: float = 0.8
    noise_scale: float = 1.0
    max_start_offset_s: int = 3

    def census(self) -> tuple:
        if self.subjects_per_class is not None:
            if len(self.subjects_per_class) != self.num_classes:
                raise ParameterError(
                    f"subjects_per_class has {len(self.subjects_per_class)} entries "
                    f"for {self.num_classes} classes")
            return tuple(self.subjects_per_class)
        return DEFAULT_CENSUS[self.num_classes]

    def validate(self) -> None:
        if self.num_classes not in CLASS_CENTROIDS:
            raise ParameterError(f"num_classes must be 2 or 3, got {self.num_classes}")
        if self.duration_min_s <= 0 or self.duration_max_s < self.duration_min_s:
            raise ParameterError(
                f"invalid duration range [{self.duration_min_s}, {self.duration_max_s}]")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ParameterError(f"AR coefficient must be in [0, 1), got {self.ar_coeff}")
        self.census()


def _ar1(n: int, mean: float, phi: float, sigma: float, rng) -> np.ndarray:
    noise = sigma * rng.standard_normal(n)
    return mean + lfilter([1.0], [1.0, -phi], noise)


def synth_generate(config: SynthConfig, rng) -> list[Subject]:
    """Generate the configured census of subjects with 33 streams each."""
    config.validate()
    centroids = CLASS_CENTROIDS[config.num_classes]
    sep = config.separation

    # Dataset-level channel statistics, drawn once so all subjects share them.
    n_ch = len(CHANNELS)
    base_means = rng.uniform(-5.0, 5.0, size=n_ch)
    base_scales = rng.uniform(0.5, 2.0, size=n_ch)
    class_gains = rng.normal(0.0, 1.0, size=n_ch)

    subjects = []
    sid = 0
    for label, count in enumerate(config.census()):
        centroid = centroids[label]
        for _ in range(count):
            duration = rng.uniform(config.duration_min_s, config.duration_max_s)
            demo = np.empty(len(DEMOGRAPHIC_FIELDS))
            for j, field in enumerate(DEMOGRAPHIC_FIELDS):
                base, shift, spread = _DEMO_PARAMS[field]
                personal = rng.standard_normal() if spread else 0.0
                demo[j] = base + sep * (shift * centroid + spread * personal)
            offsets = rng.integers(0, config.max_start_offset_s + 1, size=n_ch)
            subject_drift = rng.standard_normal(n_ch)
            streams = []
            for c, (name, rate) in enumerate(CHANNELS):
                mean = base_means[c] + sep * base_scales[c] * (
                    class_gains[c] * centroid + 0.25 * subject_drift[c])
                n = int(round(duration * rate))
                samples = _ar1(n, mean, config.ar_coeff,
                               config.noise_scale * base_scales[c], rng)
                streams.append(Stream(name, rate, int(offsets[c]) * 1000, samples))
            subjects.append(Subject(f"s{sid:03d}", streams, demo, label))
            sid += 1
    return subjects
