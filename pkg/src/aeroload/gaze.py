"""Gaze processing: velocity-threshold saccades/fixations and semantic annotation.

Semantic annotation looks at a fixed 121-pixel disk around the gaze point in
a scene label map, weights each pixel's semantic group by
``exp(priority / 3) - 1`` and normalises the per-group sums into a
distribution over the 8 groups.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Modality, TimeSeriesChannel
from .errors import (
    EmptyPixelSetError,
    MaskDimMismatchError,
    RasterFormatError,
    TooFewSamplesError,
    UnknownClassIdError,
)

# --------------------------------------------------------------------------
# saccades and fixations


@dataclass(frozen=True)
class SaccadeConfig:
    speed_threshold: float
    min_fixation_s: float = 0.0

    def __post_init__(self):
        if not self.speed_threshold > 0:
            raise ValueError("speed_threshold must be positive")
        if self.min_fixation_s < 0:
            raise ValueError("min_fixation_s must be >= 0")

    @classmethod
    def from_frame(cls, width: float, height: float, rate_hz: float,
                   fraction: float = 0.02, min_fixation_s: float = 0.0) -> "SaccadeConfig":
        """Threshold of ``fraction`` of the frame diagonal per sample interval."""
        diag = float(np.hypot(width, height))
        return cls(speed_threshold=fraction * diag * rate_hz, min_fixation_s=min_fixation_s)


@dataclass(frozen=True)
class GazeEvents:
    saccade_times: tuple[float, ...]
    fixations: tuple[tuple[float, float], ...]
    saccade_distances: tuple[float, ...]
    # per-sample views, used to build the 5-column gaze channel
    saccade_flag: np.ndarray = field(repr=False, compare=False, default=None)
    fixation_flag: np.ndarray = field(repr=False, compare=False, default=None)
    saccade_dist: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def n_saccades(self) -> int:
        return len(self.saccade_times)


def _runs(flags: np.ndarray) -> list[tuple[int, int, bool]]:
    """Maximal runs of equal values as (first, last, value), inclusive."""
    if len(flags) == 0:
        return []
    edges = np.flatnonzero(flags[1:] != flags[:-1]) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges - 1, [len(flags) - 1]))
    return [(int(a), int(b), bool(flags[a])) for a, b in zip(starts, ends)]


def step_speeds(t: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Speed of the step arriving at each sample 1..n-1."""
    dx = xy[1:, 0] - xy[:-1, 0]
    dy = xy[1:, 1] - xy[:-1, 1]
    return np.sqrt(dx * dx + dy * dy) / (t[1:] - t[:-1])


def detect_saccades(gaze: TimeSeriesChannel, cfg: SaccadeConfig) -> GazeEvents:
    """Label each inter-sample step as saccadic when its speed exceeds the threshold.

    Consecutive saccadic steps form one saccade whose distance is the
    displacement from the sample before the run to the run's last sample.
    Maximal runs of non-saccadic steps lasting at least ``min_fixation_s``
    are fixations, spanning from the sample before the run to its last one.
    """
    t = gaze.timestamps
    n = len(t)
    if n < 2:
        raise TooFewSamplesError(f"saccade detection needs >= 2 samples, got {n}")
    xy = gaze.samples[:, :2]
    fast = step_speeds(t, xy) > cfg.speed_threshold

    sac_times, sac_dists, fixations = [], [], []
    sac_flag = np.zeros(n)
    fix_flag = np.zeros(n)
    sac_dist = np.zeros(n)
    for a, b, is_sac in _runs(fast):
        # step k (0-based in `fast`) runs from sample k to sample k + 1
        first, last = a, b + 1
        if is_sac:
            dx = xy[last, 0] - xy[first, 0]
            dy = xy[last, 1] - xy[first, 1]
            d = float(np.sqrt(dx * dx + dy * dy))
            sac_times.append(float(t[first]))
            sac_dists.append(d)
            sac_flag[first + 1:last + 1] = 1.0
            sac_dist[first + 1:last + 1] = d
        else:
            if t[last] - t[first] >= cfg.min_fixation_s:
                fixations.append((float(t[first]), float(t[last])))
                fix_flag[first:last + 1] = 1.0
    return GazeEvents(tuple(sac_times), tuple(fixations), tuple(sac_dists),
                      saccade_flag=sac_flag, fixation_flag=fix_flag, saccade_dist=sac_dist)


def gaze_features(ev: GazeEvents, duration_s: float) -> tuple[float, float, float]:
    """(saccades per second, mean fixation duration, mean saccade distance)."""
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    rate = len(ev.saccade_times) / duration_s
    fix = float(np.mean([b - a for a, b in ev.fixations])) if ev.fixations else 0.0
    dist = float(np.mean(ev.saccade_distances)) if ev.saccade_distances else 0.0
    return rate, fix, dist


def gaze_channel(raw: TimeSeriesChannel, cfg: SaccadeConfig) -> tuple[TimeSeriesChannel, GazeEvents]:
    """Expand raw ``(x, y)`` gaze into the processed 5-column layout."""
    ev = detect_saccades(raw, cfg)
    cols = np.column_stack([raw.samples[:, 0], raw.samples[:, 1],
                            ev.saccade_flag, ev.fixation_flag, ev.saccade_dist])
    ch = TimeSeriesChannel(Modality.GAZE, raw.timestamps, cols,
                           nominal_rate_hz=raw.nominal_rate_hz, raw=False)
    return ch, ev


# --------------------------------------------------------------------------
# semantic groups and the gaze disk

SEMANTIC_GROUPS: tuple[tuple[str, int], ...] = (
    ("Monitors", 10),
    ("Roads", 7),
    ("Buildings", 7),
    ("Water", 5),
    ("Sky", 4),
    ("Ground", 4),
    ("Airframe", 2),
    ("Inside", 1),
)
GROUP_INDEX = {name: i for i, (name, _) in enumerate(SEMANTIC_GROUPS)}
N_GROUPS = len(SEMANTIC_GROUPS)
NO_OVERRIDE = 255  # transparent pixel value in static-mask rasters

# COCO-panoptic class names of the scene segmenter, grouped.
DEFAULT_CLASS_GROUPS: dict[str, str] = {
    "monitor1": "Monitors", "monitor2": "Monitors", "monitor3": "Monitors",
    "road": "Roads", "pavement-merged": "Roads",
    "building-other-merged": "Buildings", "house": "Buildings",
    "river": "Water", "water-other": "Water", "sea": "Water",
    "sky-other-merged": "Sky",
    "grass-merged": "Ground", "dirt-merged": "Ground", "sand": "Ground",
    "tree-merged": "Ground", "mountain-merged": "Ground",
    "arm1": "Airframe", "arm2": "Airframe",
    "inside": "Inside",
}


def annotation_weight(priority) -> np.ndarray:
    """Per-pixel weight ``exp(priority / 3) - 1``."""
    return np.expm1(np.asarray(priority, dtype=np.float64) / 3.0)


DISK_RADIUS_SQ = 38


def disk_offsets(radius_sq: int = DISK_RADIUS_SQ) -> np.ndarray:
    """Lattice offsets ``(dx, dy)`` with ``dx² + dy² <= radius_sq``, sorted by (dy, dx).

    The default radius gives exactly 121 points.
    """
    r = int(np.floor(np.sqrt(radius_sq)))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dx * dx + dy * dy <= radius_sq
    # mgrid is row-major in (dy, dx) so the boolean selection is already sorted
    return np.column_stack([dx[keep], dy[keep]])


DISK_OFFSETS = disk_offsets()


@dataclass(frozen=True, eq=False)
class SemanticGroupTable:
    """Raw class id -> group index mapping plus optional static overrides.

    Static masks are ``(height, width)`` rasters of group indices where
    :data:`NO_OVERRIDE` marks pixels left to the segmenter.  Later masks win.
    """

    class_map: Mapping[int, int]
    static_masks: tuple[np.ndarray, ...] = ()
    groups: tuple[tuple[str, int], ...] = SEMANTIC_GROUPS

    def __post_init__(self):
        if len(self.groups) != 8:
            raise ValueError("exactly 8 semantic groups are required")
        cmap = {int(k): int(v) for k, v in self.class_map.items()}
        for k, v in cmap.items():
            if not 0 <= v < len(self.groups):
                raise ValueError(f"class {k} maps to invalid group {v}")
        object.__setattr__(self, "class_map", cmap)
        object.__setattr__(self, "static_masks",
                           tuple(np.asarray(m, dtype=np.uint8) for m in self.static_masks))
        lut = np.full(256, -1, dtype=np.int16)
        for k, v in cmap.items():
            lut[k] = v
        object.__setattr__(self, "_lut", lut)

    @property
    def priorities(self) -> np.ndarray:
        return np.array([p for _, p in self.groups], dtype=np.float64)

    @classmethod
    def from_names(cls, id_to_name: Mapping[int, str],
                   static_masks: Sequence[np.ndarray] = ()) -> "SemanticGroupTable":
        """Build from raw-id -> name, where name is a group or a known class name."""
        cmap = {}
        for raw_id, name in id_to_name.items():
            group = name if name in GROUP_INDEX else DEFAULT_CLASS_GROUPS.get(name)
            if group is None:
                raise UnknownClassIdError(f"class {raw_id} ({name!r}) has no semantic group")
            cmap[int(raw_id)] = GROUP_INDEX[group]
        return cls(cmap, tuple(static_masks))

    @classmethod
    def identity(cls, static_masks: Sequence[np.ndarray] = ()) -> "SemanticGroupTable":
        """Rasters that already hold group indices 0..7."""
        return cls({i: i for i in range(N_GROUPS)}, tuple(static_masks))

    def map_classes(self, raster: np.ndarray) -> np.ndarray:
        out = self._lut[np.asarray(raster, dtype=np.uint8)]
        if np.any(out < 0):
            bad = sorted(set(np.asarray(raster)[out < 0].tolist()))
            raise UnknownClassIdError(f"raw class ids without a group: {bad}")
        return out.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class SemanticFrame:
    """One label map with the gaze point; gaze is clamped into the frame."""

    width: int
    height: int
    class_ids: np.ndarray
    gaze_px: tuple[float, float]
    t: float = 0.0

    def __post_init__(self):
        ids = np.asarray(self.class_ids, dtype=np.uint8)
        if ids.size != self.width * self.height:
            raise RasterFormatError(
                f"raster has {ids.size} pixels, expected {self.width}x{self.height}")
        object.__setattr__(self, "class_ids", ids.reshape(self.height, self.width))
        gx = min(max(float(self.gaze_px[0]), 0.0), self.width - 1.0)
        gy = min(max(float(self.gaze_px[1]), 0.0), self.height - 1.0)
        object.__setattr__(self, "gaze_px", (gx, gy))


def disk_coords(center: tuple[float, float], width: int, height: int) -> np.ndarray:
    """In-frame ``(x, y)`` pixel coordinates of the disk at ``center`` (rounded half up)."""
    cx = int(np.floor(center[0] + 0.5))
    cy = int(np.floor(center[1] + 0.5))
    xs = DISK_OFFSETS[:, 0] + cx
    ys = DISK_OFFSETS[:, 1] + cy
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    return np.column_stack([xs[inside], ys[inside]])


def disk_pixels(center: tuple[float, float], frame: SemanticFrame) -> np.ndarray:
    """Raster values under the 121-point disk at ``center``; off-frame points dropped."""
    xy = disk_coords(center, frame.width, frame.height)
    return frame.class_ids[xy[:, 1], xy[:, 0]].astype(np.int64)


def semantic_distribution(pixels: Iterable[int], table: SemanticGroupTable) -> np.ndarray:
    """Priority-weighted distribution over the 8 groups for a set of group-index pixels."""
    pixels = np.asarray(list(pixels) if not isinstance(pixels, np.ndarray) else pixels,
                        dtype=np.int64)
    if pixels.size == 0:
        raise EmptyPixelSetError("semantic_distribution needs at least one pixel")
    counts = np.bincount(pixels, minlength=len(table.groups)).astype(np.float64)
    weights = counts * annotation_weight(table.priorities)
    return weights / weights.sum()


def apply_static_masks(frame: SemanticFrame, table: SemanticGroupTable) -> SemanticFrame:
    """Overlay the table's static masks; masked pixels take the mask's group."""
    if not table.static_masks:
        return frame
    ids = frame.class_ids.copy()
    for mask in table.static_masks:
        if mask.shape != (frame.height, frame.width):
            raise MaskDimMismatchError(
                f"mask {mask.shape[1]}x{mask.shape[0]} vs frame {frame.width}x{frame.height}")
        over = mask != NO_OVERRIDE
        ids[over] = mask[over]
    return SemanticFrame(frame.width, frame.height, ids, frame.gaze_px, frame.t)


# --------------------------------------------------------------------------
# SEG1 raster stream

SEG_MAGIC = b"SEG1"


@dataclass(frozen=True, eq=False)
class SegmentationVideo:
    """Label maps over time: ``rasters`` is ``(n_frames, height, width)`` uint8."""

    width: int
    height: int
    times: np.ndarray
    rasters: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rasters, dtype=np.uint8)
        t = np.asarray(self.times, dtype=np.float64)
        if r.ndim != 3 or r.shape[1:] != (self.height, self.width) or len(t) != r.shape[0]:
            raise RasterFormatError("raster stack does not match declared dimensions")
        object.__setattr__(self, "rasters", r)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    def equals(self, other) -> bool:
        return (isinstance(other, SegmentationVideo) and self.width == other.width
                and self.height == other.height and np.array_equal(self.times, other.times)
                and np.array_equal(self.rasters, other.rasters))


def write_seg1(path, video: SegmentationVideo) -> None:
    with open(path, "wb") as fh:
        fh.write(SEG_MAGIC)
        fh.write(struct.pack("<III", video.width, video.height, len(video)))
        for t, r in zip(video.times, video.rasters):
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.ascontiguousarray(r, dtype=np.uint8).tobytes())


def read_seg1(path) -> SegmentationVideo:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != SEG_MAGIC:
        raise RasterFormatError("missing SEG1 magic", path=path)
    w, h, n = struct.unpack_from("<III", data, 4)
    frame_bytes = 8 + w * h
    if len(data) != 16 + n * frame_bytes:
        raise RasterFormatError(
            f"expected {16 + n * frame_bytes} bytes for {n} frames of {w}x{h}, got {len(data)}",
            path=path)
    rec = np.dtype([("t", "<f8"), ("px", "u1", (h, w))])
    frames = np.frombuffer(data, dtype=rec, offset=16, count=n)
    return SegmentationVideo(w, h, frames["t"].copy(), frames["px"].copy())


def read_class_map(path) -> dict[int, str]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    mapping = doc.get("classes", doc) if isinstance(doc, dict) else None
    if not isinstance(mapping, dict):
        raise RasterFormatError("class map must be a JSON object", path=path)
    return {int(k): str(v) for k, v in mapping.items() if k != "format_version"}


def write_class_map(path, id_to_name: Mapping[int, str]) -> None:
    doc = {"format_version": 1, "classes": {str(k): v for k, v in sorted(id_to_name.items())}}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def semantics_channel(gaze: TimeSeriesChannel, video: SegmentationVideo,
                      table: SemanticGroupTable, max_gap_s: float | None = None) -> TimeSeriesChannel:
    """Per-frame semantic distribution at the gaze point.

    Gaze (in the raster's pixel frame) is taken from the nearest gaze sample
    in time; frames with no gaze sample within ``max_gap_s`` (default 1.5x the
    median gaze interval) are skipped.
    """
    gt = gaze.timestamps
    if max_gap_s is None:
        max_gap_s = 1.5 * float(np.median(np.diff(gt))) if len(gt) > 1 else np.inf
    idx = np.clip(np.searchsorted(gt, video.times), 1, max(len(gt) - 1, 1))
    left = np.clip(idx - 1, 0, len(gt) - 1)
    right = np.clip(idx, 0, len(gt) - 1)
    pick = np.where(np.abs(gt[left] - video.times) <= np.abs(gt[right] - video.times), left, right)
    gap = np.abs(gt[pick] - video.times)

    times, rows = [], []
    for i in np.flatnonzero(gap <= max_gap_s):
        grouped = table.map_classes(video.rasters[i])
        frame = SemanticFrame(video.width, video.height, grouped,
                              tuple(gaze.samples[pick[i], :2]), float(video.times[i]))
        frame = apply_static_masks(frame, table)
        px = disk_pixels(frame.gaze_px, frame)
        rows.append(semantic_distribution(px, table))
        times.append(frame.t)
    samples = np.array(rows) if rows else np.zeros((0, N_GROUPS))
    return TimeSeriesChannel(Modality.GAZE_SEMANTICS, np.array(times), samples)


@dataclass(frozen=True, eq=False)
class SceneLabels:
    """A session's label-map stream with its class names and static masks."""

    video: SegmentationVideo
    class_names: Mapping[int, str]
    static_masks: tuple[np.ndarray, ...] = ()

    @property
    def table(self) -> SemanticGroupTable:
        return SemanticGroupTable.from_names(self.class_names, self.static_masks)

    def equals(self, other) -> bool:
        return (isinstance(other, SceneLabels) and self.video.equals(other.video)
                and dict(self.class_names) == dict(other.class_names)
                and len(self.static_masks) == len(other.static_masks)
                and all(np.array_equal(a, b) for a, b in zip(self.static_masks, other.static_masks)))
