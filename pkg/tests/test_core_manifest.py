import json

import numpy as np
import pytest

from aeroload.core import (FlightTask, Modality, SessionRecording, TimeSeriesChannel,
                           TlxResponse, slice_channel)
from aeroload.errors import (ChannelValidationError, DanglingReferenceError,
                             ManifestParseError)
from aeroload.manifest import load_session, sessions_equal, write_session


def _task(i, start, end, group=1, flight="A"):
    return FlightTask(f"t{i}", "IV.A", 3, 1, group, flight, start, end)


def test_channel_width_checked():
    with pytest.raises(ChannelValidationError):
        TimeSeriesChannel(Modality.HR, np.arange(3.0), np.zeros((3, Modality.HR.dim + 1)))


def test_channel_rejects_non_monotone_clock():
    with pytest.raises(ChannelValidationError):
        TimeSeriesChannel(Modality.GSR, [0.0, 1.0, 1.0], np.zeros(3))


def test_channel_rejects_nan():
    with pytest.raises(ChannelValidationError):
        TimeSeriesChannel(Modality.GSR, [0.0, 1.0], [0.0, np.nan])


def test_slice_is_half_open():
    ch = TimeSeriesChannel(Modality.GSR, np.arange(10.0), np.arange(10.0))
    s = slice_channel(ch, 2.0, 5.0)
    assert list(s.timestamps) == [2.0, 3.0, 4.0]
    assert len(slice_channel(ch, 20.0, 30.0)) == 0


def test_tlx_range():
    with pytest.raises(ManifestParseError):
        TlxResponse(0, 1, 1, 1, 1, 1)
    with pytest.raises(ManifestParseError):
        TlxResponse(21, 1, 1, 1, 1, 1)


def test_overlapping_tasks_rejected():
    with pytest.raises(ManifestParseError):
        SessionRecording("P", {}, (_task(1, 0, 10), _task(2, 5, 15)), {})
    # different flights may overlap in time
    SessionRecording("P", {}, (_task(1, 0, 10), _task(2, 5, 15, flight="B")), {})


def test_dangling_tlx_group():
    tlx = {7: TlxResponse(5, 5, 5, 5, 5, 5)}
    with pytest.raises(DanglingReferenceError):
        SessionRecording("P", {}, (_task(1, 0, 10),), tlx)


def test_manifest_round_trip(small_dataset, tmp_path):
    _, sessions, _ = small_dataset
    for s in sessions[:2]:
        write_session(s, tmp_path / s.participant_id)
        back = load_session(tmp_path / s.participant_id)
        assert sessions_equal(s, back)


def test_corrupt_csv_names_file(small_dataset, tmp_path):
    _, sessions, _ = small_dataset
    root = tmp_path / "P"
    write_session(sessions[0], root)
    doc = json.loads((root / "manifest.json").read_text())
    victim = next(e["file"] for e in doc["channels"].values() if not e.get("missing"))
    with open(root / victim, "a") as fh:
        fh.write("1e9,not-a-number\n")
    with pytest.raises(ChannelValidationError) as info:
        load_session(root)
    assert info.value.path is not None and str(info.value.path).endswith(victim)


def test_missing_manifest():
    with pytest.raises(ManifestParseError):
        load_session("/nonexistent/manifest.json")
