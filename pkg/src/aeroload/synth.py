"""Synthetic sessions with planted workload effects.

Each participant flies the task table (durations scaled down) with a latent
workload level 0/1/2 per task group.  Modalities listed in ``planted_effects``
shift with the level along a per-participant direction; every other
modality is noise around a participant offset.  TLX mental demand tracks the
latent level, so labels derived from it carry the planted structure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    FLIGHT_TASK_TABLE,
    FlightTask,
    Modality,
    SessionRecording,
    TimeSeriesChannel,
    TlxResponse,
)
from .errors import InvalidSpecError
from .features import LabelThresholds, derive_labels
from .fnirs import FnirsConfig
from .gaze import GROUP_INDEX, NO_OVERRIDE, SceneLabels, SegmentationVideo

FLIGHT_ORDERS = ("ABC", "ACB", "BAC", "BCA", "CAB", "CBA")

# rng stream ids
_S_LEVELS, _S_TLX, _S_MISSING, _S_DIRECTION, _S_CHANNEL, _S_GAZE, _S_ACCEL = range(7)

# raw-id class names used by the synthetic label maps; names go through the
# default class -> group table when the session is processed
SCENE_CLASSES = {0: "monitor1", 1: "road", 2: "house", 3: "sea", 4: "sky-other-merged",
                 5: "grass-merged", 6: "arm1", 7: "inside"}


# Planted effect for the individualization scenario: the workload shift of
# each participant points mostly along their own direction, so a target's own
# tasks carry information the pooled population only partly shares.
IDIOSYNCRATIC_EFFECTS = ((Modality.FLIGHT_DERIVATIVE, 3.0, 0.7),)


@dataclass(frozen=True)
class SynthSpec:
    n_participants: int = 28
    n_task_groups: int = 13
    seed: int = 0
    planted_effects: tuple[tuple[Modality, float, float], ...] = ((Modality.PUPILLARY, 3.0, 0.0),)
    missing_modality_rate: float = 0.04
    noise_sigma: float = 1.0
    rate_hz: float = 10.0
    duration_scale: float = 0.05
    level_noise: float = 0.8
    tlx_noise: float = 1.0
    frame_size: tuple[int, int] = (48, 32)
    frame_rate_hz: float = 1.0

    def __post_init__(self):
        effects = tuple((Modality.parse(m) if not isinstance(m, Modality) else m,
                         float(e), float(i)) for m, e, i in self.planted_effects)
        object.__setattr__(self, "planted_effects", effects)
        object.__setattr__(self, "frame_size", tuple(int(v) for v in self.frame_size))
        if self.n_participants < 1:
            raise InvalidSpecError("n_participants must be >= 1")
        if not 3 <= self.n_task_groups <= 13:
            raise InvalidSpecError("n_task_groups must be within 3..13")
        if not 0 <= self.missing_modality_rate < 1:
            raise InvalidSpecError("missing_modality_rate must be in [0, 1)")
        if not self.noise_sigma > 0:
            raise InvalidSpecError("noise_sigma must be positive")
        if not (self.rate_hz > 0 and self.duration_scale > 0 and self.frame_rate_hz > 0):
            raise InvalidSpecError("rates and duration_scale must be positive")
        if min(self.frame_size) < 16:
            raise InvalidSpecError("frame_size must be at least 16x16")
        for m, e, i in effects:
            if e < 0 or not 0 <= i <= 1:
                raise InvalidSpecError(f"{m.value}: effect_size >= 0 and idiosyncrasy in [0, 1]")
        if len({m for m, _, _ in effects}) != len(effects):
            raise InvalidSpecError("a modality may appear only once in planted_effects")

    @property
    def effects(self) -> dict[Modality, tuple[float, float]]:
        return {m: (e, i) for m, e, i in self.planted_effects}

    def to_dict(self) -> dict:
        return {"n_participants": self.n_participants, "n_task_groups": self.n_task_groups,
                "seed": self.seed,
                "planted_effects": [[m.value, e, i] for m, e, i in self.planted_effects],
                "missing_modality_rate": self.missing_modality_rate,
                "noise_sigma": self.noise_sigma, "rate_hz": self.rate_hz,
                "duration_scale": self.duration_scale, "level_noise": self.level_noise,
                "tlx_noise": self.tlx_noise, "frame_size": list(self.frame_size),
                "frame_rate_hz": self.frame_rate_hz}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise InvalidSpecError(f"unknown synth spec keys {sorted(bad)}")
        kw = dict(d)
        if "planted_effects" in kw:
            kw["planted_effects"] = tuple(tuple(x) for x in kw["planted_effects"])
        if "frame_size" in kw:
            kw["frame_size"] = tuple(kw["frame_size"])
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise InvalidSpecError(str(exc)) from None


@dataclass(frozen=True)
class GroundTruth:
    levels: dict[str, dict[int, int]]
    labels: dict[str, dict[int, int]]
    directions: dict[str, dict[str, list[float]]] = field(default_factory=dict)


def _rng(spec: SynthSpec, participant: int, stream: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng([spec.seed, participant, stream, sub])


def _schedule(spec: SynthSpec, participant: int):
    """Tasks laid out on one clock; flights follow a counterbalanced order."""
    rows = [(k, r) for k, r in enumerate(FLIGHT_TASK_TABLE) if r[4] <= spec.n_task_groups]
    order = FLIGHT_ORDERS[participant % len(FLIGHT_ORDERS)]
    gap = 4.0
    t = 20.0  # baseline occupies [0, 20)
    tasks = []
    for flight in order:
        for k, (acs, diff, dur_min, survey, group, fg) in rows:
            if fg != flight:
                continue
            dur = max(dur_min * 60.0 * spec.duration_scale, 1.0)
            tasks.append(FlightTask(f"T{k + 1:02d}", acs, diff, survey, group, fg, t, t + dur))
            t += dur + gap
        t += 2 * gap
    return tasks, (0.0, 20.0), t


def _levels(spec: SynthSpec, participant: int, tasks) -> dict[int, int]:
    """Balanced 3-level design: task-group difficulty mapped linearly onto the
    latent scale plus noise, then split into terciles (lowest and highest
    ``n // 3`` groups are levels 0 and 2)."""
    rng = _rng(spec, participant, _S_LEVELS)
    groups = sorted({t.task_group for t in tasks})
    z = np.array([float(np.mean([t.expected_difficulty for t in tasks if t.task_group == g]))
                  for g in groups])
    z = (z - 1) / 5 * 2 + rng.normal(0, spec.level_noise, len(groups))
    order = np.argsort(z, kind="stable")
    k = len(groups) // 3
    lv = np.ones(len(groups), dtype=np.int64)
    lv[order[:k]] = 0
    lv[order[len(groups) - k:]] = 2
    return {g: int(v) for g, v in zip(groups, lv)}


def _tlx(spec: SynthSpec, participant: int, levels: dict[int, int]) -> dict[int, TlxResponse]:
    rng = _rng(spec, participant, _S_TLX)
    out = {}
    for g, lv in levels.items():
        def item(center, sd):
            return int(np.clip(np.rint(center + rng.normal(0, sd)), 1, 20))
        out[g] = TlxResponse(mental=item(4 + 6 * lv, spec.tlx_noise), physical=item(6 + 2 * lv, 3),
                             temporal=item(5 + 4 * lv, 3), performance=item(14 - 2 * lv, 3),
                             effort=item(5 + 5 * lv, 2), frustration=item(4 + 3 * lv, 3))
    return out


def _direction(spec: SynthSpec, participant: int, m: Modality, dim: int, iota: float) -> np.ndarray:
    common = np.ones(dim) / math.sqrt(dim)
    rng = _rng(spec, participant, _S_DIRECTION, list(Modality).index(m))
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    v = (1 - iota) * common + iota * u
    n = np.linalg.norm(v)
    return v / n if n > 0 else common


def _signal(spec, participant, m, dim, t, tasks, levels, effect, direction):
    """Participant offset + per-task offset + planted level shift + sample noise."""
    rng = _rng(spec, participant, _S_CHANNEL, list(Modality).index(m))
    s = spec.noise_sigma
    x = rng.normal(0, 2 * s, dim) + rng.normal(0, 0.5 * s, (len(t), dim))
    for task in tasks:
        sel = (t >= task.start_t) & (t < task.end_t)
        shift = effect * s * (levels[task.task_group] - 1) * direction
        x[sel] += rng.normal(0, s, dim) + shift
    return x


def _fnirs_raw(spec, participant, t, conc):
    """Forward Beer-Lambert: concentrations (mM) -> interleaved intensities."""
    cfg = FnirsConfig()
    a = cfg.extinction * (cfg.pathlength_cm * cfg.dpf)
    n_opt = conc.shape[1] // 2
    pairs = np.stack([conc[:, :n_opt], conc[:, n_opt:]], axis=-1)  # (n, opt, [hbo, hbr])
    dod = pairs @ a.T                                             # (n, opt, wavelength)
    rng = _rng(spec, participant, _S_CHANNEL, 99)
    i0 = rng.uniform(800, 1200, (1, n_opt, 2))
    return (i0 * 10.0 ** (-dod)).reshape(len(t), 2 * n_opt)


def _accel(spec, participant, t, tasks):
    """Headband accelerometer in g: gravity plus small noise, with a few
    head-movement bursts placed in the gaps between tasks."""
    rng = _rng(spec, participant, _S_ACCEL)
    a = np.tile([0.0, 0.0, 1.0], (len(t), 1)) + rng.normal(0, 0.01, (len(t), 3))
    for prev, nxt in zip(tasks, tasks[1:]):
        if nxt.start_t - prev.end_t >= 3.0 and rng.random() < 0.2:
            sel = (t >= prev.end_t + 0.5) & (t < prev.end_t + 2.5)
            a[sel] += rng.normal(0, 0.4, (int(sel.sum()), 3))
    return a


def _scene(spec: SynthSpec):
    """Static scene: sky on top, terrain bands, a monitor panel bottom centre,
    cockpit interior along the bottom edge and an airframe static mask."""
    w, h = spec.frame_size
    ids = np.full((h, w), 4, dtype=np.uint8)            # sky
    horizon = h // 3
    ids[horizon:, :] = 5                                  # ground
    ids[horizon:horizon + 3, : w // 3] = 1                # road
    ids[horizon:horizon + 5, w // 3: w // 2] = 2          # buildings
    ids[horizon + 5: h - 8, 2 * w // 3:] = 3              # water
    ids[h - 8:, :] = 7                                    # cockpit interior
    panel = (slice(h - 14, h - 2), slice(w // 2 - 9, w // 2 + 9))
    ids[panel] = 0                                        # monitors
    mask = np.full((h, w), NO_OVERRIDE, dtype=np.uint8)
    mask[:, :2] = GROUP_INDEX["Airframe"]
    mask[:, -2:] = GROUP_INDEX["Airframe"]
    return ids, mask, panel


def _gaze(spec, participant, t, tasks, levels, panel, dist_effect, monitor_effect):
    """Fixation/saccade trace in frame pixels plus the per-sample target list.

    Saccade lengths shrink with workload by ``dist_effect``; the probability
    that a fixation lands on the monitor panel grows by ``monitor_effect``.
    """
    rng = _rng(spec, participant, _S_GAZE)
    w, h = spec.frame_size
    level_at = np.full(len(t), 1.0)
    for task in tasks:
        level_at[(t >= task.start_t) & (t < task.end_t)] = levels[task.task_group]
    xy = np.empty((len(t), 2))
    pos = np.array([w / 2, h / 2])
    i = 0
    while i < len(t):
        lv = level_at[i] - 1
        dwell = max(2, int(rng.integers(4, 10)))
        p_mon = np.clip(0.25 + 0.2 * monitor_effect * lv, 0.0, 0.95)
        if rng.random() < p_mon:
            target = np.array([rng.uniform(panel[1].start + 1, panel[1].stop - 1),
                               rng.uniform(panel[0].start + 1, panel[0].stop - 1)])
        else:
            length = max(2.0, (w / 3) * (1 - 0.25 * dist_effect * lv) * rng.uniform(0.5, 1.5))
            ang = rng.uniform(0, 2 * np.pi)
            target = pos + length * np.array([np.cos(ang), np.sin(ang)])
            target = np.clip(target, [1, 1], [w - 2, h - 2])
        pos = target
        n = min(dwell, len(t) - i)
        xy[i:i + n] = pos + rng.normal(0, 0.15, (n, 2))
        i += n
    lost = rng.random(len(t)) < 0.005
    xy[lost] = np.nan
    return np.clip(xy, 0, [w - 1, h - 1], where=~np.isnan(xy), out=xy)


def generate_session(spec: SynthSpec, participant: int) -> tuple[SessionRecording, dict, dict]:
    pid = f"P{participant + 1:03d}"
    tasks, baseline, end = _schedule(spec, participant)
    levels = _levels(spec, participant, tasks)
    tlx = _tlx(spec, participant, levels)
    rng_missing = _rng(spec, participant, _S_MISSING)
    missing = {m for m in Modality if rng_missing.random() < spec.missing_modality_rate}
    t = np.round(np.arange(0.0, end, 1.0 / spec.rate_hz), 6)
    effects = spec.effects
    channels: dict[Modality, TimeSeriesChannel] = {}
    directions = {}
    diagnostics = {}
    for m in Modality:
        if m in (Modality.GAZE, Modality.GAZE_SEMANTICS):
            continue
        effect, iota = effects.get(m, (0.0, 0.0))
        v = _direction(spec, participant, m, m.dim, iota)
        if m in effects:
            directions[m.value] = v.tolist()
        x = _signal(spec, participant, m, m.dim, t, tasks, levels, effect, v)
        if m in missing:
            continue
        if m is Modality.FNIRS:
            raw = _fnirs_raw(spec, participant, t, 1e-3 * x)
            channels[m] = TimeSeriesChannel(m, t, np.round(raw, 6), spec.rate_hz, raw=True)
        else:
            channels[m] = TimeSeriesChannel(m, t, np.round(x, 6), spec.rate_hz)
    accel = None
    if Modality.FNIRS in channels:
        accel = TimeSeriesChannel(Modality.ACC, t, np.round(_accel(spec, participant, t, tasks), 6),
                                  spec.rate_hz)
    scene_ids, static_mask, panel = _scene(spec)
    gaze_effect = effects.get(Modality.GAZE, (0.0, 0.0))[0]
    sem_effect = effects.get(Modality.GAZE_SEMANTICS, (0.0, 0.0))[0]
    xy = _gaze(spec, participant, t, tasks, levels, panel, gaze_effect, sem_effect)
    segmentation = None
    if Modality.GAZE not in missing:
        keep = ~np.isnan(xy).any(axis=1)
        diagnostics["Gaze.dropped_nan_rows"] = int((~keep).sum())
        channels[Modality.GAZE] = TimeSeriesChannel(Modality.GAZE, t[keep], np.round(xy[keep], 6),
                                                    spec.rate_hz, raw=True)
        if Modality.GAZE_SEMANTICS not in missing:
            ft = np.round(np.arange(0.0, end, 1.0 / spec.frame_rate_hz), 6)
            rasters = np.repeat(scene_ids[None], len(ft), axis=0)
            video = SegmentationVideo(spec.frame_size[0], spec.frame_size[1], ft, rasters)
            segmentation = SceneLabels(video, dict(SCENE_CLASSES), (static_mask,))
    session = SessionRecording(pid, channels, tuple(tasks), tlx, baseline, accel, segmentation,
                               diagnostics)
    return session, levels, directions


def generate_dataset(spec: SynthSpec, jobs: int = 1) -> tuple[list[SessionRecording], GroundTruth]:
    """Sessions plus ground truth (latent levels and TLX-derived labels)."""
    from .pipeline import parallel_map

    results = parallel_map(lambda p: generate_session(spec, p), range(spec.n_participants), jobs)
    sessions = [r[0] for r in results]
    levels = {s.participant_id: r[1] for s, r in zip(sessions, results)}
    labels = {s.participant_id: derive_labels(s.tlx, LabelThresholds()) for s in sessions}
    dirs = {s.participant_id: r[2] for s, r in zip(sessions, results)}
    return sessions, GroundTruth(levels, labels, dirs)


def write_dataset(spec: SynthSpec, out_dir, jobs: int = 1) -> Path:
    """Write one session tree per participant plus ``dataset.json`` and ``truth.json``."""
    from .manifest import write_session
    from .pipeline import parallel_map

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sessions, truth = generate_dataset(spec, jobs)
    parallel_map(lambda s: write_session(s, out / s.participant_id), sessions, jobs)
    index = {"format_version": 1, "spec": spec.to_dict(),
             "sessions": [f"{s.participant_id}/manifest.json" for s in sessions]}
    (out / "dataset.json").write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    doc = {"levels": {p: {str(g): v for g, v in d.items()} for p, d in truth.levels.items()},
           "labels": {p: {str(g): v for g, v in d.items()} for p, d in truth.labels.items()}}
    (out / "truth.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                    encoding="utf-8")
    return out

