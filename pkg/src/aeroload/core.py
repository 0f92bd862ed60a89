"""Domain types shared by all stages: modalities, channels, tasks, sessions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ChannelValidationError, DanglingReferenceError, ManifestParseError


class Category(enum.Enum):
    PHYSIOLOGICAL = "Physiological"
    BEHAVIORAL = "Behavioral"
    SITUATIONAL = "Situational"
    FLIGHT_DERIVATIVE = "FlightDerivative"


class Modality(enum.Enum):
    GSR = "GSR"
    HR = "HR"
    FNIRS = "FNIRS"
    PUPILLARY = "Pupillary"
    FSR = "FSR"
    BODY_POSE = "BodyPose"
    ACC = "ACC"
    GAZE = "Gaze"
    FLIGHT_CONTROL = "FlightControl"
    GAZE_SEMANTICS = "GazeSemantics"
    FLIGHT_DERIVATIVE = "FlightDerivative"

    @property
    def dim(self) -> int:
        return len(MODALITY_COLUMNS[self])

    @property
    def raw_dim(self) -> int:
        return len(RAW_COLUMNS.get(self, MODALITY_COLUMNS[self]))

    @property
    def category(self) -> Category:
        return MODALITY_CATEGORY[self]

    @property
    def columns(self) -> tuple[str, ...]:
        return MODALITY_COLUMNS[self]

    @classmethod
    def parse(cls, name: str) -> "Modality":
        try:
            return cls(name)
        except ValueError:
            for m in cls:
                if m.name == name or m.value.lower() == str(name).lower():
                    return m
            raise


_JOINTS = ("head", "l_elbow", "r_elbow", "l_hand", "r_hand",
           "l_shoulder", "r_shoulder", "l_wrist", "r_wrist")
N_OPTODES = 8

MODALITY_COLUMNS: dict[Modality, tuple[str, ...]] = {
    Modality.GSR: ("gsr",),
    Modality.HR: ("hr", "ibi"),
    Modality.FNIRS: tuple(f"hbo_{i}" for i in range(N_OPTODES))
    + tuple(f"hbr_{i}" for i in range(N_OPTODES)),
    Modality.PUPILLARY: ("pupil_left", "pupil_right"),
    Modality.FSR: ("fsr_1", "fsr_2"),
    Modality.BODY_POSE: tuple(f"{j}_{a}" for j in _JOINTS for a in "xyz"),
    Modality.ACC: ("acc_x", "acc_y", "acc_z"),
    Modality.GAZE: ("x", "y", "saccade_flag", "fixation_flag", "saccade_dist"),
    Modality.FLIGHT_CONTROL: ("throttle_vertical", "throttle_horizontal",
                              "stick_roll", "stick_pitch"),
    Modality.GAZE_SEMANTICS: ("Monitors", "Roads", "Buildings", "Water",
                              "Sky", "Ground", "Airframe", "Inside"),
    Modality.FLIGHT_DERIVATIVE: ("pos_x", "pos_y", "pos_z", "roll", "pitch", "yaw",
                                 "vel_x", "vel_y", "vel_z"),
}

# Raw input layouts that differ from the processed layout.  FNIRS raw input is
# intensity at two wavelengths per optode, interleaved, which has the same
# width as the processed (HbO block, HbR block) layout.
RAW_COLUMNS: dict[Modality, tuple[str, ...]] = {
    Modality.GAZE: ("x", "y"),
    Modality.FNIRS: tuple(f"i{wl}_{i}" for i in range(N_OPTODES) for wl in ("wl1", "wl2")),
}

MODALITY_CATEGORY: dict[Modality, Category] = {
    Modality.GSR: Category.PHYSIOLOGICAL,
    Modality.HR: Category.PHYSIOLOGICAL,
    Modality.FNIRS: Category.PHYSIOLOGICAL,
    Modality.PUPILLARY: Category.PHYSIOLOGICAL,
    Modality.FSR: Category.BEHAVIORAL,
    Modality.BODY_POSE: Category.BEHAVIORAL,
    Modality.ACC: Category.BEHAVIORAL,
    Modality.GAZE: Category.BEHAVIORAL,
    Modality.FLIGHT_CONTROL: Category.BEHAVIORAL,
    Modality.GAZE_SEMANTICS: Category.SITUATIONAL,
    Modality.FLIGHT_DERIVATIVE: Category.FLIGHT_DERIVATIVE,
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeriesChannel:
    """A sampled signal for one modality.

    ``samples`` is ``(n, dim)``.  ``raw`` selects which column layout the
    width is checked against (raw gaze is ``(x, y)`` only).  ``artifact_mask``
    flags samples that downstream aggregation must skip.
    """

    modality: Modality
    timestamps: np.ndarray
    samples: np.ndarray
    nominal_rate_hz: float | None = None
    raw: bool = False
    artifact_mask: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ChannelValidationError(f"{self.modality.value}: samples must be 2-D")
        if len(t) != x.shape[0]:
            raise ChannelValidationError(
                f"{self.modality.value}: {len(t)} timestamps but {x.shape[0]} sample rows")
        want = self.modality.raw_dim if self.raw else self.modality.dim
        if x.shape[1] != want:
            raise ChannelValidationError(
                f"{self.modality.value}: expected {want} columns, got {x.shape[1]}")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ChannelValidationError(f"{self.modality.value}: timestamps not strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ChannelValidationError(f"{self.modality.value}: non-finite values")
        if self.nominal_rate_hz is not None and not self.nominal_rate_hz > 0:
            raise ChannelValidationError(f"{self.modality.value}: nominal_rate_hz must be positive")
        object.__setattr__(self, "timestamps", _frozen(t))
        object.__setattr__(self, "samples", _frozen(x))
        if self.artifact_mask is not None:
            m = np.asarray(self.artifact_mask, dtype=bool).reshape(-1)
            if len(m) != len(t):
                raise ChannelValidationError(f"{self.modality.value}: artifact mask length mismatch")
            object.__setattr__(self, "artifact_mask", _frozen(m))

    def __len__(self):
        return len(self.timestamps)

    @property
    def columns(self) -> tuple[str, ...]:
        return RAW_COLUMNS.get(self.modality, self.modality.columns) if self.raw else self.modality.columns

    @property
    def clean(self) -> np.ndarray:
        """Boolean selector of samples not flagged as artifacts."""
        if self.artifact_mask is None:
            return np.ones(len(self), dtype=bool)
        return ~self.artifact_mask

    def replace(self, **changes) -> "TimeSeriesChannel":
        kw = dict(modality=self.modality, timestamps=self.timestamps, samples=self.samples,
                  nominal_rate_hz=self.nominal_rate_hz, raw=self.raw,
                  artifact_mask=self.artifact_mask)
        kw.update(changes)
        return TimeSeriesChannel(**kw)

    def equals(self, other: "TimeSeriesChannel") -> bool:
        if not isinstance(other, TimeSeriesChannel):
            return False
        masks_equal = (
            (self.artifact_mask is None and other.artifact_mask is None)
            or (self.artifact_mask is not None and other.artifact_mask is not None
                and np.array_equal(self.artifact_mask, other.artifact_mask))
        )
        return (self.modality == other.modality and self.raw == other.raw
                and self.nominal_rate_hz == other.nominal_rate_hz
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.samples, other.samples) and masks_equal)


def slice_channel(ch: TimeSeriesChannel, start_t: float, end_t: float) -> TimeSeriesChannel:
    """Samples with ``start_t <= t < end_t``; may be empty."""
    if not start_t < end_t:
        raise ValueError("slice_channel requires start_t < end_t")
    lo = np.searchsorted(ch.timestamps, start_t, side="left")
    hi = np.searchsorted(ch.timestamps, end_t, side="left")
    mask = None if ch.artifact_mask is None else ch.artifact_mask[lo:hi]
    return ch.replace(timestamps=ch.timestamps[lo:hi], samples=ch.samples[lo:hi],
                      artifact_mask=mask)


@dataclass(frozen=True)
class FlightTask:
    task_id: str
    acs_ref: str
    expected_difficulty: int
    survey_group: int
    task_group: int
    flight_group: str
    start_t: float
    end_t: float

    def __post_init__(self):
        if not self.start_t < self.end_t:
            raise ManifestParseError(f"task {self.task_id}: start_t must precede end_t")
        if self.expected_difficulty not in range(1, 7):
            raise ManifestParseError(f"task {self.task_id}: expected_difficulty must be in 1..6")

    @property
    def duration(self) -> float:
        return self.end_t - self.start_t


TLX_ITEMS = ("mental", "physical", "temporal", "performance", "effort", "frustration")


@dataclass(frozen=True)
class TlxResponse:
    mental: int
    physical: int
    temporal: int
    performance: int
    effort: int
    frustration: int

    def __post_init__(self):
        for name in TLX_ITEMS:
            v = getattr(self, name)
            if int(v) != v or not 1 <= v <= 20:
                raise ManifestParseError(f"TLX item {name}={v!r} outside 1..20")


# (acs_ref, expected_difficulty, duration_min, survey_group, task_group, flight_group)
FLIGHT_TASK_TABLE: tuple[tuple[str, int, float, int, int, str], ...] = (
    ("IV.A", 3, 2.0, 1, 1, "A"),
    ("IV.B", 3, 1.0, 1, 1, "A"),
    ("V.A", 4, 3.0, 1, 2, "A"),
    ("V.C", 3, 7.0, 1, 3, "A"),
    ("VI.B", 3, 0.5, 1, 3, "A"),
    ("VI.B", 3, 0.5, 1, 3, "A"),
    ("VI.C", 4, 1.0, 2, 4, "A"),
    ("VI.C", 4, 1.0, 2, 4, "A"),
    ("VI.C", 4, 1.0, 2, 4, "A"),
    ("VI.B", 5, 1.0, 2, 5, "A"),
    ("VI.B", 3, 1.0, 2, 6, "A"),
    ("V.C", 2, 5.0, 2, 6, "A"),
    ("V.A, V.D", 4, 3.0, 3, 7, "A"),
    ("V.D, V.E", 5, 2.0, 3, 7, "A"),
    ("IV.A, IV.C", 6, 2.5, 4, 8, "B"),
    ("V.B", 6, 4.5, 4, 8, "B"),
    ("IV.A", 3, 1.0, 4, 9, "B"),
    ("IV.B", 3, 1.0, 4, 9, "B"),
    ("V.E, II.D", 6, 4.0, 4, 10, "B"),
    ("V.B", 5, 3.0, 5, 11, "C"),
    ("V.E", 5, 3.0, 5, 11, "C"),
    ("V.H", 6, 3.0, 5, 12, "C"),
    ("V.H", 5, 3.0, 5, 13, "C"),
)
N_TASK_GROUPS = 13


@dataclass(frozen=True, eq=False)
class SessionRecording:
    """One participant's recording.

    A modality absent from ``channels`` is missing for this participant.
    ``fnirs_accel`` is the headband accelerometer used for motion-artifact
    rejection; ``segmentation`` holds the scene label maps (see
    :mod:`aeroload.gaze`) when gaze semantics still need computing.
    """

    participant_id: str
    channels: Mapping[Modality, TimeSeriesChannel]
    tasks: tuple[FlightTask, ...]
    tlx: Mapping[int, TlxResponse]
    baseline_window: tuple[float, float] | None = None
    fnirs_accel: TimeSeriesChannel | None = None
    segmentation: object | None = None
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "channels", dict(self.channels))
        object.__setattr__(self, "tlx", {int(k): v for k, v in self.tlx.items()})
        for m, ch in self.channels.items():
            if ch.modality != m:
                raise ChannelValidationError(f"channel keyed {m.value} holds {ch.modality.value}")
        by_flight: dict[str, list[FlightTask]] = {}
        for task in self.tasks:
            by_flight.setdefault(task.flight_group, []).append(task)
        for flight, tasks in by_flight.items():
            tasks = sorted(tasks, key=lambda tk: tk.start_t)
            for a, b in zip(tasks, tasks[1:]):
                if b.start_t < a.end_t:
                    raise ManifestParseError(
                        f"tasks {a.task_id} and {b.task_id} overlap in flight {flight}")
        groups = self.task_groups
        for g in self.tlx:
            if g not in groups:
                raise DanglingReferenceError(f"TLX refers to unknown task group {g}")
        if self.baseline_window is not None:
            a, b = self.baseline_window
            if not a < b:
                raise ManifestParseError("baseline window start must precede end")

    @property
    def task_groups(self) -> list[int]:
        return sorted({t.task_group for t in self.tasks})

    def group_windows(self, task_group: int) -> list[tuple[float, float]]:
        return sorted((t.start_t, t.end_t) for t in self.tasks if t.task_group == task_group)

    def replace(self, **changes) -> "SessionRecording":
        kw = dict(participant_id=self.participant_id, channels=self.channels, tasks=self.tasks,
                  tlx=self.tlx, baseline_window=self.baseline_window,
                  fnirs_accel=self.fnirs_accel, segmentation=self.segmentation,
                  diagnostics=self.diagnostics)
        kw.update(changes)
        return SessionRecording(**kw)
