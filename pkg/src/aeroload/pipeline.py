"""Session processing: raw fNIRS and gaze to processed channels, then features."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .core import FLIGHT_TASK_TABLE, Modality, SessionRecording
from .features import AggregationSpec, FeatureTable, LabelThresholds, build_feature_table
from .fnirs import FnirsConfig, process_fnirs
from .gaze import SaccadeConfig, gaze_channel, semantics_channel

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Scene frame size used for the saccade threshold when no label maps exist.
DEFAULT_FRAME = (1032, 366)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """``[fn(x) for x in items]`` on up to ``jobs`` threads, results in input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class PipelineConfig:
    fnirs: FnirsConfig = field(default_factory=FnirsConfig)
    saccade_speed_threshold: float | None = None
    saccade_frame_fraction: float = 0.02
    min_fixation_s: float = 0.0
    aggregation: AggregationSpec = field(default_factory=AggregationSpec.default)
    labels: LabelThresholds = field(default_factory=LabelThresholds)

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = d or {}
        sac = d.get("saccade", {})
        return cls(fnirs=FnirsConfig.from_dict(d.get("fnirs")),
                   saccade_speed_threshold=sac.get("speed_threshold"),
                   saccade_frame_fraction=sac.get("frame_fraction", 0.02),
                   min_fixation_s=sac.get("min_fixation_s", 0.0),
                   aggregation=AggregationSpec.from_dict(d.get("aggregation")),
                   labels=LabelThresholds(d.get("labels", {}).get("sigma_multiplier", 0.6)))

    def to_dict(self) -> dict:
        return {"fnirs": self.fnirs.to_dict(),
                "saccade": {"speed_threshold": self.saccade_speed_threshold,
                            "frame_fraction": self.saccade_frame_fraction,
                            "min_fixation_s": self.min_fixation_s},
                "aggregation": self.aggregation.to_dict(),
                "labels": {"sigma_multiplier": self.labels.sigma_multiplier}}

    def saccade_config(self, session: SessionRecording, rate_hz: float) -> SaccadeConfig:
        if self.saccade_speed_threshold is not None:
            return SaccadeConfig(self.saccade_speed_threshold, self.min_fixation_s)
        seg = session.segmentation
        w, h = (seg.video.width, seg.video.height) if seg is not None else DEFAULT_FRAME
        return SaccadeConfig.from_frame(w, h, rate_hz, self.saccade_frame_fraction,
                                        self.min_fixation_s)


def process_session(session: SessionRecording, cfg: PipelineConfig) -> SessionRecording:
    """fNIRS cleaning/MBLL, saccade detection and gaze semantics where inputs are raw."""
    channels = dict(session.channels)
    diag = dict(session.diagnostics)
    fn = channels.get(Modality.FNIRS)
    if fn is not None and fn.raw:
        out = process_fnirs(fn, session.fnirs_accel, session.baseline_window, cfg.fnirs)
        channels[Modality.FNIRS] = out
        diag["fnirs_artifact_fraction"] = float(np.mean(out.artifact_mask))
    gz = channels.get(Modality.GAZE)
    if gz is not None and gz.raw:
        rate = 1.0 / float(np.median(np.diff(gz.timestamps)))
        scfg = cfg.saccade_config(session, rate)
        processed, events = gaze_channel(gz, scfg)
        channels[Modality.GAZE] = processed
        diag["saccade_count"] = events.n_saccades
        diag["fixation_count"] = len(events.fixations)
        diag["saccade_speed_threshold"] = scfg.speed_threshold
        if Modality.GAZE_SEMANTICS not in channels and session.segmentation is not None:
            seg = session.segmentation
            channels[Modality.GAZE_SEMANTICS] = semantics_channel(gz, seg.video, seg.table)
            diag["semantic_frames"] = len(channels[Modality.GAZE_SEMANTICS])
    diag["missing_modalities"] = [m.value for m in Modality if m not in channels]
    return session.replace(channels=channels, diagnostics=diag, segmentation=None)


def group_difficulties(sessions: Sequence[SessionRecording]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    if sessions:
        for t in sessions[0].tasks:
            out.setdefault(t.task_group, []).append(t.expected_difficulty)
    else:
        for row in FLIGHT_TASK_TABLE:
            out.setdefault(row[4], []).append(row[1])
    return dict(sorted(out.items()))


def build_table(sessions: Sequence[SessionRecording], cfg: PipelineConfig | None = None,
                jobs: int = 1) -> tuple[FeatureTable, dict]:
    """Process every session and aggregate into a FeatureTable; returns diagnostics too."""
    cfg = cfg or PipelineConfig()
    processed = parallel_map(lambda s: process_session(s, cfg), sessions, jobs)
    table = build_feature_table(processed, cfg.aggregation, cfg.labels)
    meta = dict(table.meta)
    meta["task_difficulty"] = {str(g): d for g, d in group_difficulties(processed).items()}
    diagnostics = {s.participant_id: _plain(s.diagnostics) for s in processed}
    return table.replace(meta=meta), diagnostics


def _plain(d):
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in sorted(d.items())}
