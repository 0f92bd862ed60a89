"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line with its runtime; the lines are printed
in the pytest terminal summary (and directly when run as a script).
"""

import json
import math
import time

import numpy as np
from scipy.stats import norm

from aeroload.cli import main as cli_main
from aeroload.core import Modality, TimeSeriesChannel
from aeroload.experiments import (ExperimentConfig, ablation, generalized_cv, individualized_all,
                                  participant_folds, upsample_multiplicity)
from aeroload.features import HIGH, LOW, MEDIUM, KNNImputer, derive_labels
from aeroload.fnirs import FnirsConfig, lowpass_filter, mbll_oxygenation
from aeroload.gaze import SaccadeConfig, SemanticGroupTable, detect_saccades, disk_coords, semantic_distribution
from aeroload.oracles import oracle_disk, oracle_knn, oracle_saccades
from aeroload.pipeline import build_table
from aeroload.synth import IDIOSYNCRATIC_EFFECTS, SynthSpec, generate_dataset

PRIORITIES = (10, 7, 7, 5, 4, 4, 2, 1)


def test_criterion_1_semantic_weighting(criterion):
    t0 = time.perf_counter()
    table = SemanticGroupTable.identity()
    rng = np.random.default_rng(100)
    worst, sums_ok = 0.0, True
    for _ in range(20):
        counts = rng.integers(0, 40, 8)
        counts[rng.integers(8)] += 1
        w = [c * (math.exp(p / 3) - 1) for c, p in zip(counts, PRIORITIES)]
        expect = np.array(w) / sum(w)
        got = semantic_distribution(np.repeat(np.arange(8), counts), table)
        worst = max(worst, float(np.max(np.abs(got - expect))))
        sums_ok &= abs(got.sum() - 1) < 1e-12
    d = semantic_distribution([0, 7], table)
    ratio = d[0] / d[7]
    direct = (math.exp(10 / 3) - 1) / (math.exp(1 / 3) - 1)
    # the direct evaluation is 68.33; the quoted 68.54 agrees to 0.3%
    ok = worst < 1e-9 and sums_ok and abs(ratio - direct) < 1e-9 and abs(ratio / 68.54 - 1) < 0.005
    assert criterion(1, ok, f"max |err| {worst:.1e}, sums to 1: {sums_ok}, Monitors/Inside {ratio:.4f}",
                     time.perf_counter() - t0, 1)


def test_criterion_2_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(200)
    mismatches = {"saccade": 0, "knn": 0, "disk": 0}
    for _ in range(100):
        n = int(rng.integers(2, 200))
        t = np.cumsum(rng.uniform(0.01, 0.05, n))
        xy = np.cumsum(rng.normal(0, 1, (n, 2)) * rng.choice([0.1, 5.0], (n, 1)), axis=0)
        thr, mf = float(rng.uniform(5, 200)), float(rng.choice([0.0, 0.1]))
        ev = detect_saccades(TimeSeriesChannel(Modality.GAZE, t, xy, raw=True), SaccadeConfig(thr, mf))
        if (ev.saccade_times, ev.saccade_distances, ev.fixations) != oracle_saccades(t, xy, thr, mf):
            mismatches["saccade"] += 1
    for _ in range(100):
        r, c = int(rng.integers(2, 30)), int(rng.integers(1, 7))
        X = rng.normal(size=(r, c))
        X[rng.random((r, c)) < 0.3] = np.nan
        X[0, np.isnan(X).all(axis=0)] = 1.0
        k = int(rng.integers(1, 6))
        if not np.array_equal(KNNImputer(k).fit_transform(X), oracle_knn(X, k), equal_nan=True):
            mismatches["knn"] += 1
    for _ in range(100):
        w, h = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        ctr = (float(rng.uniform(-3, w + 3)), float(rng.uniform(-3, h + 3)))
        if [tuple(p) for p in disk_coords(ctr, w, h).tolist()] != oracle_disk(ctr, w, h):
            mismatches["disk"] += 1
    ok = not any(mismatches.values())
    assert criterion(2, ok, f"mismatches over 100 instances each: {mismatches}",
                     time.perf_counter() - t0, 30)


def test_criterion_3_mbll_round_trip(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(300)
    worst = 0.0
    t = np.arange(100) * 0.1
    for _ in range(100):
        eps = rng.uniform(0.1, 2.0, (2, 2))
        while np.linalg.cond(eps) > 1e3:
            eps = rng.uniform(0.1, 2.0, (2, 2))
        cfg = FnirsConfig(extinction=eps)
        c = rng.normal(0, 1e-3, (100, 8, 2))
        c -= c.mean(axis=0)
        od = c @ (eps * cfg.pathlength_cm * cfg.dpf).T
        I = (rng.uniform(500, 1500, (1, 8, 2)) * 10 ** (-od)).reshape(100, 16)
        oxy = mbll_oxygenation(TimeSeriesChannel(Modality.FNIRS, t, I, raw=True), None, cfg)
        worst = max(worst, float(np.abs(oxy.hbo - c[:, :, 0]).max()), float(np.abs(oxy.hbr - c[:, :, 1]).max()))
    assert criterion(3, worst < 1e-8, f"max abs error {worst:.2e} over 100 random extinction matrices",
                     time.perf_counter() - t0, 5)


def _tone_gain(f, fs=50.0, seconds=60.0):
    t = np.arange(0, seconds, 1 / fs)
    x = np.sin(2 * np.pi * f * t)
    y = lowpass_filter(TimeSeriesChannel(Modality.GSR, t, x), 2.0).samples[:, 0]
    core = slice(len(t) // 4, 3 * len(t) // 4)
    X, Y = np.fft.rfft(x[core]), np.fft.rfft(y[core])
    k = int(np.argmax(np.abs(X)))
    return abs(Y[k]) / abs(X[k])


def test_criterion_4_filter_contract(criterion):
    t0 = time.perf_counter()
    passband = _tone_gain(0.1)
    stop_db = 20 * np.log10(_tone_gain(5.0))
    ok = passband >= 0.99 and stop_db <= -20
    assert criterion(4, ok, f"0.1 Hz gain {passband:.4f}, 5 Hz attenuation {stop_db:.1f} dB",
                     time.perf_counter() - t0, 5)


def test_criterion_5_label_rule(criterion):
    t0 = time.perf_counter()
    scores = np.random.default_rng(500).normal(size=100_000)
    lab = np.array(list(derive_labels(dict(enumerate(scores))).values()))
    tail = norm.cdf(-0.6)
    props = [float(np.mean(lab == c)) for c in (LOW, MEDIUM, HIGH)]
    expect = [tail, 1 - 2 * tail, tail]
    hand = derive_labels({1: 4, 2: 10, 3: 16})
    ok = (max(abs(a - b) for a, b in zip(props, expect)) < 0.02
          and hand == {1: LOW, 2: MEDIUM, 3: HIGH})
    assert criterion(5, ok, f"proportions {np.round(props, 4).tolist()} vs {np.round(expect, 4).tolist()}, "
                     f"(4,10,16) -> {[hand[g] for g in (1, 2, 3)]}", time.perf_counter() - t0, 5)


def test_criterion_6_chance_level(criterion):
    t0 = time.perf_counter()
    accs = []
    for seed in range(20):
        sessions, _ = generate_dataset(SynthSpec(seed=seed))
        table, _ = build_table(sessions)
        shuffled = table.replace(labels=np.random.default_rng([seed, 6]).permutation(table.labels))
        accs.append(generalized_cv(shuffled, ExperimentConfig(seed=seed)).balanced_accuracy)
    mean = float(np.mean(accs))
    inside = sum(abs(a - 1 / 3) <= 0.07 for a in accs)
    ok = abs(mean - 1 / 3) <= 0.07
    assert criterion(6, ok, f"mean balanced accuracy {mean:.3f} over 20 seeds "
                     f"(range {min(accs):.3f}-{max(accs):.3f}, {inside}/20 runs inside 1/3 +- 0.07)",
                     time.perf_counter() - t0, 300)


def test_criterion_7_planted_signal(criterion):
    t0 = time.perf_counter()
    sessions, _ = generate_dataset(SynthSpec())
    table, _ = build_table(sessions)
    cfg = ExperimentConfig(modalities_to_ablate=("Pupillary", "GSR"))
    base = generalized_cv(table, cfg)
    rows = {r["modality"]: r["accuracy_drop"] for r in ablation(table, cfg, base).ablation_rows}
    ok = base.balanced_accuracy >= 0.80 and rows["Pupillary"] > 0.15 and abs(rows["GSR"]) <= 0.05
    assert criterion(7, ok, f"generalized {base.balanced_accuracy:.3f}, drop without Pupillary "
                     f"{rows['Pupillary']:+.3f}, without GSR {rows['GSR']:+.3f}",
                     time.perf_counter() - t0, 600)


def test_criterion_8_individualization(criterion):
    t0 = time.perf_counter()
    sessions, _ = generate_dataset(SynthSpec(planted_effects=IDIOSYNCRATIC_EFFECTS))
    table, _ = build_table(sessions)
    cfg = ExperimentConfig()
    general = generalized_cv(table, cfg).balanced_accuracy
    rep = individualized_all(table, cfg, targets=table.participants[:10])
    curve = rep.upsampling_curve
    acc = [a for _, a in curve]
    peak = int(np.argmax(acc))
    tail = [a for p, a in curve if p >= 0.8]
    ok = (abs(acc[0] - general) <= 0.05 and 0 < peak < len(acc) - 1
          and all(a < acc[peak] for a in tail) and acc[peak] - acc[0] >= 0.05)
    shape = ", ".join(f"{p:g}:{a:.3f}" for p, a in curve)
    assert criterion(8, ok, f"generalized {general:.3f}; curve {shape}; peak at p={curve[peak][0]:g}",
                     time.perf_counter() - t0, 600)


def test_criterion_9_protocol_fidelity(criterion):
    t0 = time.perf_counter()
    folds = participant_folds([f"P{i:03d}" for i in range(1, 29)], 5, seed=0)
    sizes = sorted(len(f) for f in folds)
    sessions, _ = generate_dataset(SynthSpec())
    table, _ = build_table(sessions)
    n_labeled = int((table.labels >= 0).sum())
    rng = np.random.default_rng(900)
    worst = 0.0
    for _ in range(50):
        n_o, n_t, p = int(rng.integers(10, 400)), int(rng.integers(1, 14)), float(rng.uniform(0, 0.95))
        t = int(upsample_multiplicity(n_o, n_t, p, rng).sum())
        worst = max(worst, abs(t - p * (n_o + t)))
    ok = sizes == [5, 5, 6, 6, 6] and n_labeled == 364 and worst <= 1.0
    assert criterion(9, ok, f"fold sizes {sizes}, labeled rows {n_labeled}, "
                     f"max upsampling deviation {worst:.3f} rows", time.perf_counter() - t0, None)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"experiment": {"modalities_to_ablate": ["Pupillary", "GSR"],
                                              "target_participant": "P003",
                                              "upsample_fractions": [0.0, 0.4]}}))
    outputs = []
    for run, jobs in (("a", "1"), ("b", "8")):
        root = tmp_path / run
        common = ["--config", str(cfg), "--seed", "7", "--jobs", jobs]
        codes = [cli_main(["synth", *common, "--out", str(root / "data")]),
                 cli_main(["process", *common, "--data", str(root / "data"), "--out", str(root / "proc")]),
                 cli_main(["experiment", *common, "--data", str(root / "proc"), "--out", str(root / "reports"),
                           "--protocol", "generalized", "--protocol", "individualized",
                           "--protocol", "ablation", "--protocol", "baseline"])]
        assert codes == [0, 0, 0]
        outputs.append((_tree(root / "proc"), _tree(root / "reports")))
    same = outputs[0] == outputs[1]
    n_files = len(outputs[0][0]) + len(outputs[0][1])
    assert criterion(10, same, f"{n_files} output files byte-identical for --jobs 1 vs --jobs 8: {same}",
                     time.perf_counter() - t0, 600)


if __name__ == "__main__":
    import sys

    import pytest
    sys.exit(pytest.main([__file__, "-q"]))
