import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aeroload.core import Modality, TimeSeriesChannel
from aeroload.errors import (EmptyPixelSetError, MaskDimMismatchError, RasterFormatError,
                             TooFewSamplesError, UnknownClassIdError)
from aeroload.gaze import (DISK_OFFSETS, NO_OVERRIDE, SaccadeConfig, SegmentationVideo,
                           SemanticFrame, SemanticGroupTable, apply_static_masks,
                           detect_saccades, disk_coords, disk_pixels, read_seg1,
                           semantic_distribution, semantics_channel, write_seg1)
from aeroload.oracles import oracle_disk, oracle_saccades, oracle_semantic_distribution

PRIORITIES = (10, 7, 7, 5, 4, 4, 2, 1)
TABLE = SemanticGroupTable.identity()


def _gaze(t, xy):
    return TimeSeriesChannel(Modality.GAZE, t, xy, raw=True)


def test_disk_has_121_points():
    assert len(DISK_OFFSETS) == 121
    assert [tuple(p) for p in DISK_OFFSETS] == oracle_disk()


def test_disk_clipped_at_corner():
    xy = disk_coords((0.0, 0.0), 50, 50)
    # one quadrant plus the two half-axes and the centre
    assert len(xy) == sum(1 for dx, dy in oracle_disk() if dx >= 0 and dy >= 0)


def test_weight_examples():
    # Monitors vs Inside weight ratio, evaluated directly
    ratio = math.expm1(10 / 3) / math.expm1(1 / 3)
    single = semantic_distribution([0, 7], TABLE)
    assert single[0] / single[7] == pytest.approx(ratio, rel=1e-12)
    assert ratio == pytest.approx(68.3286, abs=1e-4)


def test_distribution_by_hand():
    rng = np.random.default_rng(8)
    for _ in range(20):
        counts = rng.integers(0, 30, 8)
        counts[rng.integers(8)] += 1
        pixels = np.repeat(np.arange(8), counts)
        w = [c * (math.exp(p / 3) - 1) for c, p in zip(counts, PRIORITIES)]
        expect = [v / sum(w) for v in w]
        got = semantic_distribution(pixels, TABLE)
        assert np.max(np.abs(got - expect)) < 1e-9
        assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_empty_pixels():
    with pytest.raises(EmptyPixelSetError):
        semantic_distribution([], TABLE)


def test_unknown_class_id():
    table = SemanticGroupTable.from_names({0: "monitor1", 1: "road"})
    with pytest.raises(UnknownClassIdError):
        table.map_classes(np.array([[0, 1, 9]]))
    with pytest.raises(UnknownClassIdError):
        SemanticGroupTable.from_names({3: "giraffe"})


def test_static_mask_overrides():
    ids = np.zeros((4, 5), dtype=np.uint8)
    mask = np.full((4, 5), NO_OVERRIDE, dtype=np.uint8)
    mask[0, :] = 6
    frame = SemanticFrame(5, 4, ids, (2, 2))
    out = apply_static_masks(frame, SemanticGroupTable.identity([mask]))
    assert (out.class_ids[0] == 6).all() and (out.class_ids[1:] == 0).all()
    with pytest.raises(MaskDimMismatchError):
        apply_static_masks(frame, SemanticGroupTable.identity([mask[:, :3]]))


def test_saccade_example():
    t = np.arange(6) * 0.1
    xy = np.array([[0, 0], [0, 0], [10, 0], [20, 0], [20, 0], [20, 0]], dtype=float)
    ev = detect_saccades(_gaze(t, xy), SaccadeConfig(50.0))
    assert ev.saccade_times == (0.1,)
    assert ev.saccade_distances == (20.0,)
    assert ev.fixations == ((t[0], t[1]), (t[3], t[5]))


def test_saccade_needs_two_samples():
    with pytest.raises(TooFewSamplesError):
        detect_saccades(_gaze([0.0], [[1.0, 1.0]]), SaccadeConfig(1.0))


def test_seg1_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    video = SegmentationVideo(7, 5, np.arange(3) * 0.5, rng.integers(0, 8, (3, 5, 7)))
    write_seg1(tmp_path / "v.seg", video)
    assert read_seg1(tmp_path / "v.seg").equals(video)
    (tmp_path / "bad.seg").write_bytes((tmp_path / "v.seg").read_bytes()[:-1])
    with pytest.raises(RasterFormatError):
        read_seg1(tmp_path / "bad.seg")


def test_semantics_channel_follows_gaze():
    raster = np.zeros((20, 40), dtype=np.uint8)
    raster[:, 20:] = 7
    video = SegmentationVideo(40, 20, [0.0, 1.0], np.stack([raster, raster]))
    gaze = _gaze([0.0, 1.0], [[5.0, 10.0], [35.0, 10.0]])
    ch = semantics_channel(gaze, video, TABLE)
    assert ch.samples[0, 0] == 1.0 and ch.samples[1, 7] == 1.0


# --- equivalence with the brute-force oracles ---------------------------------

def test_saccades_match_oracle():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n = int(rng.integers(2, 300))
        t = np.cumsum(rng.uniform(0.01, 0.05, n))
        xy = np.cumsum(rng.normal(0, 1, (n, 2)) * rng.choice([0.1, 5.0], (n, 1)), axis=0)
        thr = float(rng.uniform(5, 200))
        min_fix = float(rng.choice([0.0, 0.05, 0.2]))
        ev = detect_saccades(_gaze(t, xy), SaccadeConfig(thr, min_fix))
        times, dists, fix = oracle_saccades(t, xy, thr, min_fix)
        assert ev.saccade_times == times
        assert ev.saccade_distances == dists
        assert ev.fixations == fix


def test_disk_matches_oracle():
    rng = np.random.default_rng(22)
    for _ in range(100):
        w, h = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        c = (float(rng.uniform(-3, w + 3)), float(rng.uniform(-3, h + 3)))
        got = [tuple(p) for p in disk_coords(c, w, h).tolist()]
        assert got == oracle_disk(c, w, h)


def test_distribution_matches_oracle():
    rng = np.random.default_rng(23)
    for _ in range(100):
        px = rng.integers(0, 8, int(rng.integers(1, 121)))
        got = semantic_distribution(px, TABLE)
        want = oracle_semantic_distribution(px, PRIORITIES)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


@given(st.lists(st.integers(0, 7), min_size=1, max_size=200))
def test_distribution_is_probability(px):
    d = semantic_distribution(px, TABLE)
    assert d.sum() == pytest.approx(1.0, abs=1e-12)
    assert (d >= 0).all()
    assert set(np.flatnonzero(d)) == set(px)


@given(st.floats(1.0, 500.0), st.floats(0.5, 4.0))
def test_saccades_scale_with_threshold(thr, k):
    # scaling positions and threshold together leaves events unchanged
    rng = np.random.default_rng(4)
    t = np.arange(100) * 0.02
    xy = np.cumsum(rng.normal(0, 3, (100, 2)), axis=0)
    a = detect_saccades(_gaze(t, xy), SaccadeConfig(thr))
    b = detect_saccades(_gaze(t, xy * k), SaccadeConfig(thr * k))
    assert a.saccade_times == b.saccade_times
    assert a.fixations == b.fixations


def test_disk_pixels_counts():
    frame = SemanticFrame(40, 40, np.zeros(1600), (20.0, 20.0))
    assert len(disk_pixels(frame.gaze_px, frame)) == 121
