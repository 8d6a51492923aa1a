"""Multi-rate sensor-stream alignment, windowing, scaling, and encodings.

The canonical channel schema is 7 smartwatch streams (mixed rates), 26
smartphone streams at 3 Hz, and 7 demographic scalars. A 15-second analysis
window with a 30-second gap between consecutive windows (stride 45 s) yields
2535 watch readings and 1170 phone readings, which flatten — demographics
appended last — to the length-3712 server input. The edge encoding samples
every channel at 4 steps per second (60 steps per window), holding the most
recent reading for slower channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError, StateError

WINDOW_S = 15.0
SHIFT_S = 30.0
STEPS_PER_SECOND = 4
STEPS_PER_WINDOW = int(WINDOW_S) * STEPS_PER_SECOND  # 60

WATCH_CHANNELS = (
    ("gsr", 4.0),
    ("skin_temp", 4.0),
    ("acc_x", 32.0),
    ("acc_y", 32.0),
    ("acc_z", 32.0),
    ("ibi", 1.0),
    ("bvp", 64.0),
)

_PHONE_NAMES = (
    "humidity", "illuminance",
    "color_r", "color_g", "color_b", "color_w",
    "ambient_temp",
    "gravity_x", "gravity_y", "gravity_z",
    "angular_velocity_x", "angular_velocity_y", "angular_velocity_z",
    "orientation_x", "orientation_y", "orientation_z",
    "acceleration_x", "acceleration_y", "acceleration_z",
    "linear_acceleration_x", "linear_acceleration_y", "linear_acceleration_z",
    "air_pressure", "proximity", "wifi_strength", "magnetic_strength",
)
PHONE_CHANNELS = tuple((name, 3.0) for name in _PHONE_NAMES)

CHANNELS = WATCH_CHANNELS + PHONE_CHANNELS  # 33 streams

DEMOGRAPHIC_FIELDS = (
    "age", "gender", "height", "weight", "relatives_with_diabetes", "smoking", "drinking",
)

WATCH_READINGS_PER_WINDOW = sum(int(WINDOW_S * r) for _, r in WATCH_CHANNELS)   # 2535
PHONE_READINGS_PER_WINDOW = sum(int(WINDOW_S * r) for _, r in PHONE_CHANNELS)   # 1170
SERVER_VECTOR_LEN = WATCH_READINGS_PER_WINDOW + PHONE_READINGS_PER_WINDOW + len(DEMOGRAPHIC_FIELDS)
EDGE_STEP_LEN = len(CHANNELS) + len(DEMOGRAPHIC_FIELDS)  # 40


@dataclass
class Stream:
    """One sensor channel: fixed-rate samples anchored at a millisecond timestamp."""

    name: str
    rate_hz: float
    start_ms: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate_hz


@dataclass
class Subject:
    id: str
    streams: list[Stream]
    demographics: np.ndarray
    label: int

    def __post_init__(self):
        self.demographics = np.asarray(self.demographics, dtype=np.float64)

    def validate_schema(self) -> None:
        if len(self.streams) != len(CHANNELS):
            raise DataError(
                f"subject {self.id}: expected {len(CHANNELS)} streams, got {len(self.streams)}"
            )
        for stream, (name, rate) in zip(self.streams, CHANNELS):
            if stream.name != name or stream.rate_hz != rate:
                raise DataError(
                    f"subject {self.id}: stream {stream.name}@{stream.rate_hz}Hz "
                    f"does not match schema entry {name}@{rate}Hz"
                )
        if self.demographics.shape != (len(DEMOGRAPHIC_FIELDS),):
            raise DataError(
                f"subject {self.id}: expected {len(DEMOGRAPHIC_FIELDS)} demographics, "
                f"got shape {self.demographics.shape}"
            )


@dataclass
class WindowInstance:
    """One analysis window: per-channel sample arrays plus static demographics."""

    subject_id: str
    label: int
    start_s: float
    channels: list[np.ndarray]
    demographics: np.ndarray

    @property
    def end_s(self) -> float:
        return self.start_s + WINDOW_S


def synchronize(streams: list[Stream], offsets: dict[str, int] | None = None) -> list[Stream]:
    """Re-base all streams to a shared origin (the latest start), trimming leaders.

    `offsets` are per-stream clock corrections in milliseconds, added to the
    recorded start timestamps before alignment.
    """
    if not streams:
        raise DataError("no streams to synchronize")
    offsets = offsets or {}
    starts = [s.start_ms + offsets.get(s.name, 0) for s in streams]
    origin = max(starts)
    out = []
    for stream, start in zip(streams, starts):
        lead_s = (origin - start) / 1000.0
        drop = math.ceil(lead_s * stream.rate_hz - 1e-9)
        samples = stream.samples[drop:]
        if len(samples) == 0:
            raise DataError(f"stream {stream.name} is empty after trimming to the common origin")
        out.append(Stream(stream.name, stream.rate_hz, origin, samples))
    return out


def window_count(duration_s: float, window_s: float = WINDOW_S, shift_s: float = SHIFT_S) -> int:
    if duration_s < window_s:
        return 0
    return int(math.floor((duration_s - window_s) / (window_s + shift_s) + 1e-9)) + 1


def window(streams: list[Stream], window_s: float = WINDOW_S, shift_s: float = SHIFT_S):
    """Cut synchronized streams into aligned windows; trailing partials are dropped.

    Returns a list of (start_s, [per-channel arrays]) with start times
    relative to the common origin.
    """
    starts = {s.start_ms for s in streams}
    if len(starts) != 1:
        raise DataError("streams must be synchronized (shared start) before windowing")
    duration = min(s.duration_s for s in streams)
    stride = window_s + shift_s
    windows = []
    for k in range(window_count(duration, window_s, shift_s)):
        chans = []
        for s in streams:
            i0 = int(math.floor(k * stride * s.rate_hz + 1e-9))
            n = int(math.floor(window_s * s.rate_hz + 1e-9))
            chans.append(s.samples[i0:i0 + n].copy())
        windows.append((k * stride, chans))
    return windows


def subject_windows(subject: Subject, window_s: float = WINDOW_S, shift_s: float = SHIFT_S,
                    offsets: dict[str, int] | None = None) -> list[WindowInstance]:
    subject.validate_schema()
    synced = synchronize(subject.streams, offsets)
    return [
        WindowInstance(subject.id, subject.label, start, chans, subject.demographics.copy())
        for start, chans in window(synced, window_s, shift_s)
    ]


class Scaler:
    """Per-channel min-max scaling fitted on training instances only.

    Channels 0..32 are the sensor streams, 33..39 the demographics. Values
    outside the fitted range extrapolate linearly (no clamping); a constant
    channel maps to zero.
    """

    def __init__(self):
        self.mins: np.ndarray | None = None
        self.maxs: np.ndarray | None = None

    @property
    def n_channels(self) -> int:
        return len(CHANNELS) + len(DEMOGRAPHIC_FIELDS)

    def fit(self, instances: list[WindowInstance]) -> "Scaler":
        if not instances:
            raise DataError("cannot fit a scaler on zero instances")
        mins = np.full(self.n_channels, np.inf)
        maxs = np.full(self.n_channels, -np.inf)
        for inst in instances:
            for c, arr in enumerate(inst.channels):
                mins[c] = min(mins[c], arr.min())
                maxs[c] = max(maxs[c], arr.max())
            d0 = len(CHANNELS)
            np.minimum(mins[d0:], inst.demographics, out=mins[d0:])
            np.maximum(maxs[d0:], inst.demographics, out=maxs[d0:])
        self.mins, self.maxs = mins, maxs
        return self

    def _scale(self, x: np.ndarray, c: int) -> np.ndarray:
        span = self.maxs[c] - self.mins[c]
        if span == 0.0:
            return np.zeros_like(x)
        return (x - self.mins[c]) / span

    def apply(self, instance: WindowInstance) -> WindowInstance:
        if self.mins is None:
            raise StateError("scaler must be fitted before use")
        channels = [self._scale(arr, c) for c, arr in enumerate(instance.channels)]
        d0 = len(CHANNELS)
        demo = np.array([
            self._scale(np.float64(v), d0 + j) for j, v in enumerate(instance.demographics)
        ])
        return replace(instance, channels=channels, demographics=demo)


def fit_scaler(train_instances: list[WindowInstance]) -> Scaler:
    return Scaler().fit(train_instances)


def apply_scaler(scaler: Scaler, instance: WindowInstance) -> WindowInstance:
    return scaler.apply(instance)


def _check_counts(instance: WindowInstance, window_s: float = WINDOW_S) -> None:
    for arr, (name, rate) in zip(instance.channels, CHANNELS):
        expect = int(math.floor(window_s * rate + 1e-9))
        if len(arr) != expect:
            raise DataError(f"channel {name}: expected {expect} samples, got {len(arr)}")


def flatten_server(instance: WindowInstance) -> np.ndarray:
    """Concatenate all channels (watch then phone, time-ordered) + demographics."""
    _check_counts(instance)
    return np.concatenate(list(instance.channels) + [instance.demographics])


def step_encode_edge(instance: WindowInstance) -> np.ndarray:
    """(60, 40) per-step encoding: at each 0.25 s step take the most recent
    reading of every channel (hold for slower channels, subsample for faster),
    then append the demographics unchanged."""
    _check_counts(instance)
    steps = np.arange(STEPS_PER_WINDOW)
    out = np.empty((STEPS_PER_WINDOW, EDGE_STEP_LEN))
    for c, (arr, (_, rate)) in enumerate(zip(instance.channels, CHANNELS)):
        idx = np.floor(steps * (rate / STEPS_PER_SECOND) + 1e-9).astype(np.int64)
        out[:, c] = arr[idx]
    out[:, len(CHANNELS):] = instance.demographics
    return out


@dataclass
class WindowedDataset:
    instances: list[WindowInstance]
    split: list[str]
    scaler: Scaler | None = None

    def by_split(self, name: str) -> list[WindowInstance]:
        return [inst for inst, s in zip(self.instances, self.split) if s == name]

    def counts(self) -> dict[str, int]:
        out = {"train": 0, "val": 0, "test": 0}
        for s in self.split:
            out[s] += 1
        return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(instances: list[WindowInstance], fractions=(0.7, 0.1, 0.2), rng=None) -> WindowedDataset:
    """Assign each subject's time-ordered windows to contiguous train→val→test
    segments, keeping global counts within ±1 of the exact fractions.

    Subjects are processed in a seeded random order and allocations track the
    cumulative quota, so the final totals round the global fractions exactly.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise DataError(f"fractions must be three values summing to 1, got {fractions}")
    if rng is None:
        rng = np.random.default_rng(0)
    groups: dict[str, list[int]] = {}
    for i, inst in enumerate(instances):
        groups.setdefault(inst.subject_id, []).append(i)
    for idxs in groups.values():
        idxs.sort(key=lambda i: instances[i].start_s)
    subject_ids = sorted(groups)
    order = [subject_ids[i] for i in rng.permutation(len(subject_ids))]

    f_train, f_val, _ = fractions
    assignment = [""] * len(instances)
    seen = taken_train = taken_val = 0
    for sid in order:
        idxs = groups[sid]
        n = len(idxs)
        seen += n
        train_target = _round_half_up(f_train * seen)
        trainval_target = _round_half_up((f_train + f_val) * seen)
        n_train = min(max(train_target - taken_train, 0), n)
        n_val = min(max(trainval_target - taken_train - taken_val - n_train, 0), n - n_train)
        for j, i in enumerate(idxs):
            if j < n_train:
                assignment[i] = "train"
            elif j < n_train + n_val:
                assignment[i] = "val"
            else:
                assignment[i] = "test"
        taken_train += n_train
        taken_val += n_val
    ds = WindowedDataset(list(instances), assignment)
    counts = ds.counts()
    if min(counts.values()) == 0:
        raise DataError(f"too few instances to populate all splits: {counts}")
    return ds


def prepare(subjects: list[Subject], rng, fractions=(0.7, 0.1, 0.2),
            window_s: float = WINDOW_S, shift_s: float = SHIFT_S) -> WindowedDataset:
    """Window every subject, split time-disjointly, fit the scaler on the
    training split only, and scale all instances."""
    instances: list[WindowInstance] = []
    for subject in subjects:
        instances.extend(subject_windows(subject, window_s, shift_s))
    if not instances:
        raise DataError("no windows produced; recordings shorter than one window?")
    ds = split(instances, fractions, rng)
    scaler = fit_scaler(ds.by_split("train"))
    ds.instances = [scaler.apply(inst) for inst in ds.instances]
    ds.scaler = scaler
    return ds


def encode_split(ds: WindowedDataset, kind: str, split_name: str):
    insts = ds.by_split(split_name)
    encoder = flatten_server if kind == "server" else step_encode_edge
    x = np.stack([encoder(inst) for inst in insts]) if insts else np.empty((0,))
    y = np.array([inst.label for inst in insts], dtype=np.int64)
    return x, y


# --- on-disk text format -----------------------------------------------------

def save_dataset(subjects: list[Subject], root) -> None:
    """Text layout: `manifest` lists subject ids; each subject directory holds
    one file per stream (header `name,rate_hz,start_timestamp_ms`, then one
    sample per line) plus `demographics` and `label` files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for subject in subjects:
        subject.validate_schema()
        sdir = root / subject.id
        sdir.mkdir(parents=True, exist_ok=True)
        for stream in subject.streams:
            lines = [f"{stream.name},{stream.rate_hz!r},{stream.start_ms}"]
            lines += [repr(float(v)) for v in stream.samples]
            (sdir / stream.name).write_text("\n".join(lines) + "\n")
        (sdir / "demographics").write_text(
            "\n".join(repr(float(v)) for v in subject.demographics) + "\n")
        (sdir / "label").write_text(f"{subject.label}\n")
    (root / "manifest").write_text("\n".join(s.id for s in subjects) + "\n")


def load_dataset(root) -> list[Subject]:
    root = Path(root)
    manifest = root / "manifest"
    if not manifest.exists():
        raise DataError(f"no manifest file in {root}")
    subjects = []
    for sid in manifest.read_text().split():
        sdir = root / sid
        streams = []
        for name, rate in CHANNELS:
            path = sdir / name
            if not path.exists():
                raise DataError(f"subject {sid}: missing stream file {name}")
            lines = path.read_text().splitlines()
            head_name, head_rate, head_start = lines[0].split(",")
            if head_name != name or float(head_rate) != rate:
                raise DataError(f"subject {sid}: stream header {lines[0]!r} does not match schema")
            samples = np.array([float(v) for v in lines[1:]])
            streams.append(Stream(name, rate, int(head_start), samples))
        demo = np.array([float(v) for v in (sdir / "demographics").read_text().split()])
        label = int((sdir / "label").read_text().strip())
        subject = Subject(sid, streams, demo, label)
        subject.validate_schema()
        subjects.append(subject)
    return subjects
