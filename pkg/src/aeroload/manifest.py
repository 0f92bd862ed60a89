"""Session manifest ingestion and serialisation.

A session is a directory holding ``manifest.json`` plus one CSV per channel
(header ``t,<col0>,...``).  Scene label maps use the SEG1 raster format from
:mod:`aeroload.gaze`.  Example manifest::

    {"format_version": 1, "participant_id": "P01",
     "baseline": {"start": 0.0, "end": 30.0},
     "channels": {"GSR": {"file": "gsr.csv"}, "FNIRS": {"missing": true},
                  "Gaze": {"file": "gaze.csv", "stage": "raw"}},
     "aux": {"fnirs_accel": {"file": "fnirs_accel.csv"},
             "segmentation": {"file": "scene.seg", "class_map": "classes.json",
                              "static_masks": ["masks.seg"]}},
     "tasks": [{"task_id": "T01", "acs_ref": "IV.A", "expected_difficulty": 3,
                "survey_group": 1, "task_group": 1, "flight_group": "A",
                "start_t": 30.0, "end_t": 42.0}],
     "tlx": {"1": {"mental": 7, "physical": 5, ...}}}
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    RAW_COLUMNS,
    TLX_ITEMS,
    FlightTask,
    Modality,
    SessionRecording,
    TimeSeriesChannel,
    TlxResponse,
)
from .errors import AeroloadError, ChannelValidationError, ManifestParseError
from .gaze import SceneLabels, read_class_map, read_seg1, write_class_map, write_seg1

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ACCEL_COLUMNS = ("ax", "ay", "az")


def read_channel_csv(path, modality: Modality | None, raw: bool = False,
                     nominal_rate_hz: float | None = None, allow_nan_rows: bool = False):
    """Read a channel CSV; returns ``(channel, n_dropped_rows)``.

    With ``allow_nan_rows`` rows holding NaN (track loss) are dropped and
    counted instead of rejected.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise ChannelValidationError("channel file not found", path=path) from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ChannelValidationError(f"unparseable CSV: {exc}", path=path) from None
    if len(df.columns) < 1 or df.columns[0] != "t":
        raise ChannelValidationError("first CSV column must be 't'", path=path)
    try:
        values = df.to_numpy(dtype=np.float64)
    except (ValueError, TypeError):
        raise ChannelValidationError("non-numeric values in channel CSV", path=path) from None
    dropped = 0
    if allow_nan_rows:
        bad = np.isnan(values).any(axis=1)
        dropped = int(bad.sum())
        values = values[~bad]
    t, x = values[:, 0], values[:, 1:]
    if modality is None:
        return (t, x), dropped
    try:
        ch = TimeSeriesChannel(modality, t, x, nominal_rate_hz=nominal_rate_hz, raw=raw)
    except ChannelValidationError as exc:
        raise ChannelValidationError(str(exc), path=path) from None
    return ch, dropped


def write_channel_csv(path, t: np.ndarray, x: np.ndarray, columns) -> None:
    df = pd.DataFrame(np.column_stack([t, x]), columns=["t", *columns])
    # repr-precision floats so a reload is bit-exact
    df.to_csv(path, index=False, float_format=None, lineterminator="\n")


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ManifestParseError(f"{where}: missing field {key!r}")
    return doc[key]


def _parse_tasks(items) -> list[FlightTask]:
    if not isinstance(items, list):
        raise ManifestParseError("'tasks' must be a list")
    tasks = []
    for i, d in enumerate(items):
        where = f"tasks[{i}]"
        try:
            tasks.append(FlightTask(
                task_id=str(_require(d, "task_id", where)),
                acs_ref=str(d.get("acs_ref", "")),
                expected_difficulty=int(_require(d, "expected_difficulty", where)),
                survey_group=int(d.get("survey_group", 0)),
                task_group=int(_require(d, "task_group", where)),
                flight_group=str(d.get("flight_group", "")),
                start_t=float(_require(d, "start_t", where)),
                end_t=float(_require(d, "end_t", where)),
            ))
        except (TypeError, ValueError) as exc:
            raise ManifestParseError(f"{where}: {exc}") from None
    return tasks


def _parse_tlx(doc) -> dict[int, TlxResponse]:
    if not isinstance(doc, dict):
        raise ManifestParseError("'tlx' must be an object keyed by task group")
    out = {}
    for key, d in doc.items():
        try:
            out[int(key)] = TlxResponse(**{k: int(_require(d, k, f"tlx[{key}]")) for k in TLX_ITEMS})
        except (TypeError, ValueError) as exc:
            raise ManifestParseError(f"tlx[{key}]: {exc}") from None
    return out


def load_session(manifest_path) -> SessionRecording:
    """Load and validate a session from its manifest (file or directory)."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    root = path.parent
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestParseError("manifest not found", path=path) from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestParseError(f"malformed JSON: {exc}", path=path) from None
    if not isinstance(doc, dict):
        raise ManifestParseError("manifest must be a JSON object", path=path)
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ManifestParseError(f"unsupported format_version {version}", path=path)

    try:
        pid = str(_require(doc, "participant_id", "manifest"))
        channels: dict[Modality, TimeSeriesChannel] = {}
        diagnostics: dict[str, object] = {}
        chan_doc = doc.get("channels", {})
        if not isinstance(chan_doc, dict):
            raise ManifestParseError("'channels' must be an object")
        for name, entry in chan_doc.items():
            try:
                modality = Modality.parse(name)
            except ValueError:
                raise ManifestParseError(f"unknown modality {name!r}") from None
            if entry.get("missing"):
                continue
            stage = entry.get("stage", "raw")
            if stage not in ("raw", "processed"):
                raise ManifestParseError(f"channel {name}: stage must be 'raw' or 'processed'")
            raw = stage == "raw" and modality in RAW_COLUMNS
            ch, dropped = read_channel_csv(
                root / _require(entry, "file", f"channels.{name}"), modality, raw=raw,
                nominal_rate_hz=entry.get("nominal_rate_hz"),
                allow_nan_rows=(modality == Modality.GAZE and raw))
            if dropped:
                diagnostics[f"{modality.value}.dropped_nan_rows"] = dropped
                log.info("%s: dropped %d gaze rows with missing values", pid, dropped)
            channels[modality] = ch

        aux = doc.get("aux", {}) or {}
        accel = None
        if "fnirs_accel" in aux and not aux["fnirs_accel"].get("missing"):
            (t, x), _ = read_channel_csv(root / aux["fnirs_accel"]["file"], None)
            if x.shape[1] != 3 or (len(t) > 1 and not np.all(np.diff(t) > 0)) \
                    or not np.isfinite(x).all():
                raise ChannelValidationError("fNIRS accelerometer must be 3 finite columns "
                                             "with increasing timestamps",
                                             path=root / aux["fnirs_accel"]["file"])
            accel = TimeSeriesChannel(Modality.ACC, t, x,
                                      nominal_rate_hz=aux["fnirs_accel"].get("nominal_rate_hz"))
        scene = None
        if "segmentation" in aux and not aux["segmentation"].get("missing"):
            seg = aux["segmentation"]
            video = read_seg1(root / seg["file"])
            names = read_class_map(root / seg["class_map"]) if "class_map" in seg \
                else {i: n for i, n in enumerate(("Monitors", "Roads", "Buildings", "Water",
                                                  "Sky", "Ground", "Airframe", "Inside"))}
            masks = tuple(read_seg1(root / m).rasters[0] for m in seg.get("static_masks", []))
            scene = SceneLabels(video, names, masks)

        baseline = None
        if doc.get("baseline") is not None:
            b = doc["baseline"]
            baseline = (float(_require(b, "start", "baseline")), float(_require(b, "end", "baseline")))

        return SessionRecording(
            participant_id=pid,
            channels=channels,
            tasks=_parse_tasks(doc.get("tasks", [])),
            tlx=_parse_tlx(doc.get("tlx", {})),
            baseline_window=baseline,
            fnirs_accel=accel,
            segmentation=scene,
            diagnostics=diagnostics,
        )
    except AeroloadError as exc:
        if exc.path is None:
            exc.path = str(path)
        raise


def write_session(session: SessionRecording, directory) -> Path:
    """Write ``session`` as a manifest tree; returns the manifest path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    chan_doc = {}
    for modality in Modality:
        ch = session.channels.get(modality)
        if ch is None:
            chan_doc[modality.value] = {"missing": True}
            continue
        fname = f"{modality.value.lower()}.csv"
        write_channel_csv(root / fname, ch.timestamps, ch.samples, ch.columns)
        entry = {"file": fname, "stage": "raw" if ch.raw else "processed"}
        if ch.nominal_rate_hz is not None:
            entry["nominal_rate_hz"] = ch.nominal_rate_hz
        chan_doc[modality.value] = entry

    aux = {}
    if session.fnirs_accel is not None:
        write_channel_csv(root / "fnirs_accel.csv", session.fnirs_accel.timestamps,
                          session.fnirs_accel.samples, ACCEL_COLUMNS)
        aux["fnirs_accel"] = {"file": "fnirs_accel.csv"}
        if session.fnirs_accel.nominal_rate_hz is not None:
            aux["fnirs_accel"]["nominal_rate_hz"] = session.fnirs_accel.nominal_rate_hz
    if session.segmentation is not None:
        scene: SceneLabels = session.segmentation
        write_seg1(root / "scene.seg", scene.video)
        write_class_map(root / "classes.json", scene.class_names)
        seg = {"file": "scene.seg", "class_map": "classes.json"}
        if scene.static_masks:
            from .gaze import SegmentationVideo
            names = []
            for i, m in enumerate(scene.static_masks):
                fname = f"static_mask_{i}.seg"
                write_seg1(root / fname, SegmentationVideo(m.shape[1], m.shape[0],
                                                           np.zeros(1), m[None]))
                names.append(fname)
            seg["static_masks"] = names
        aux["segmentation"] = seg

    doc = {
        "format_version": FORMAT_VERSION,
        "participant_id": session.participant_id,
        "baseline": None if session.baseline_window is None else
        {"start": session.baseline_window[0], "end": session.baseline_window[1]},
        "channels": chan_doc,
        "aux": aux,
        "tasks": [
            {"task_id": t.task_id, "acs_ref": t.acs_ref, "expected_difficulty": t.expected_difficulty,
             "survey_group": t.survey_group, "task_group": t.task_group,
             "flight_group": t.flight_group, "start_t": t.start_t, "end_t": t.end_t}
            for t in session.tasks
        ],
        "tlx": {str(g): {k: getattr(r, k) for k in TLX_ITEMS} for g, r in sorted(session.tlx.items())},
    }
    out = root / MANIFEST_NAME
    out.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return out


def sessions_equal(a: SessionRecording, b: SessionRecording) -> bool:
    """Structural equality used by round-trip checks."""
    if (a.participant_id != b.participant_id or a.tasks != b.tasks or dict(a.tlx) != dict(b.tlx)
            or a.baseline_window != b.baseline_window or set(a.channels) != set(b.channels)):
        return False
    if not all(a.channels[m].equals(b.channels[m]) for m in a.channels):
        return False
    if (a.fnirs_accel is None) != (b.fnirs_accel is None):
        return False
    if a.fnirs_accel is not None and not (
            np.array_equal(a.fnirs_accel.timestamps, b.fnirs_accel.timestamps)
            and np.array_equal(a.fnirs_accel.samples, b.fnirs_accel.samples)):
        return False
    if (a.segmentation is None) != (b.segmentation is None):
        return False
    return a.segmentation is None or a.segmentation.equals(b.segmentation)
