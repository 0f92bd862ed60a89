import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aeroload.errors import (InvalidConfigError, TargetNotFoundError, TooFewParticipantsError,
                             UnknownModalityError)
from aeroload.experiments import (ExperimentConfig, ablation, baseline_protocol, generalized_cv,
                                  individualized_all, individualized_cv, participant_folds,
                                  round_robin_folds, upsample_count, upsample_multiplicity)
from aeroload.models import ModelSpec
from aeroload.reports import dumps, write_report


def _cfg(**kw):
    kw.setdefault("model", ModelSpec("GBT", 0, {"n_trees": 15, "max_depth": 3}))
    kw.setdefault("n_folds", 3)
    return ExperimentConfig(**kw)


def test_fold_sizes_for_28_participants():
    parts = [f"P{i:03d}" for i in range(1, 29)]
    folds = participant_folds(parts, 5, seed=0)
    assert sorted(len(f) for f in folds) == [5, 5, 6, 6, 6]
    assert sorted(p for f in folds for p in f) == parts


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_round_robin_partitions(n, k, seed):
    items = list(range(n))
    folds = round_robin_folds(items, k, np.random.default_rng(seed))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(x for f in folds for x in f) == items


def test_upsample_example():
    # 80 other rows and 8 target rows at p = 0.2 -> 20 target copies
    assert upsample_count(80, 0.2) == 20
    reps = upsample_multiplicity(80, 8, 0.2, np.random.default_rng(0))
    assert reps.sum() == 20 and set(reps.tolist()) == {2, 3}
    assert upsample_count(80, 0.0) == 0


@given(st.integers(1, 500), st.integers(1, 30), st.floats(0.0, 0.95))
def test_upsampled_fraction_within_one_row(n_others, n_target, p):
    reps = upsample_multiplicity(n_others, n_target, p, np.random.default_rng(1))
    t = int(reps.sum())
    assert abs(t - p * (n_others + t)) <= 1.0
    assert reps.max() - reps.min() <= 1


@given(st.integers(1, 400), st.integers(1, 30))
def test_natural_fraction_keeps_each_row_once(n_others, n_target):
    p = n_target / (n_others + n_target)
    reps = upsample_multiplicity(n_others, n_target, p, np.random.default_rng(2))
    assert reps.tolist() == [1] * n_target


def test_generalized_folds_disjoint_and_leak_free(small_table):
    seen = []

    def hook(info):
        tr, va = set(info["train_rows"].tolist()), set(info["val_rows"].tolist())
        assert not tr & va
        pre = info["preprocessor"]
        # the imputer's reference rows are exactly the training rows
        assert pre.imputer.reference_.shape[0] == len(tr)
        ids = small_table.participant_ids
        assert not {ids[i] for i in tr} & {ids[i] for i in va}
        seen.append(info["fold"])

    rep = generalized_cv(small_table, _cfg(), on_fold=hook)
    assert sorted(seen) == [0, 1, 2]
    held = [p for f in rep.folds for p in f["participants"]]
    assert sorted(held) == small_table.participants
    assert 0 <= rep.balanced_accuracy <= 1


def test_preprocessing_ignores_validation_rows(small_table):
    # perturbing held-out features must not change what was fitted
    fitted = {}

    def grab(info):
        fitted.setdefault(info["fold"], []).append(info["preprocessor"].pcas[0].components_.copy())

    cfg = _cfg()
    generalized_cv(small_table, cfg, on_fold=grab)
    folds = participant_folds(small_table.participants, cfg.n_folds, cfg.seed)
    X = small_table.X.copy()
    held = np.isin(small_table.participant_ids, folds[0])
    X[held] = X[held] * 5 + 3
    generalized_cv(small_table.replace(X=X), cfg, on_fold=grab)
    assert np.array_equal(fitted[0][0], fitted[0][1])


def test_individualized_curve_shape(small_table):
    cfg = _cfg(upsample_fractions=(0.0, 0.3, 0.6))
    target = small_table.participants[0]
    rep = individualized_cv(small_table, cfg, target)
    assert [p for p, _ in rep.upsampling_curve] == [0.0, 0.3, 0.6]
    assert rep.aggregate["best_fraction"] in (0.0, 0.3, 0.6)
    for f in rep.folds:
        if f["fraction"] == 0.0:
            assert f["n_target_copies"] == 0
    with pytest.raises(TargetNotFoundError):
        individualized_cv(small_table, cfg, "nobody")


def test_individualized_all_averages_targets(small_table):
    cfg = _cfg(upsample_fractions=(0.0, 0.5))
    targets = small_table.participants[:2]
    rep = individualized_all(small_table, cfg, targets)
    for i, (p, a) in enumerate(rep.upsampling_curve):
        per = [rep.per_target[t]["curve"][i][1] for t in targets]
        assert a == pytest.approx(np.mean(per))


def test_too_few_participants(small_table):
    with pytest.raises(TooFewParticipantsError):
        generalized_cv(small_table, _cfg(n_folds=7))


def test_ablation_rows(small_table):
    cfg = _cfg(modalities_to_ablate=("GSR", "Pupillary"))
    rep = ablation(small_table, cfg)
    assert [r["modality"] for r in rep.ablation_rows] == ["GSR", "Pupillary"]
    for r in rep.ablation_rows:
        assert r["accuracy_drop"] == pytest.approx(r["baseline"] - r["ablated"])
    with pytest.raises(UnknownModalityError):
        ablation(small_table, _cfg(modalities_to_ablate=("EEG",)))


def test_ablating_constant_column_changes_nothing(small_table):
    # an all-constant modality cannot be split on, so removing it is a no-op
    X = small_table.X.copy()
    cols = small_table.columns_of("GSR")
    X[:, cols] = 1.0
    t = small_table.replace(X=X)
    cfg = _cfg(modalities_to_ablate=("GSR",), pca=())
    row = ablation(t, cfg).ablation_rows[0]
    assert row["accuracy_drop"] == 0.0


def test_baseline_protocol(small_table):
    rep = baseline_protocol(small_table, _cfg())
    assert 0 <= rep.aggregate["accuracy"] <= 1
    assert set(rep.baseline["per_group"]) == {str(g) for g in range(1, 14)}


def test_reports_are_replayable(small_table, tmp_path):
    cfg = _cfg()
    a = generalized_cv(small_table, cfg).to_dict()
    b = generalized_cv(small_table, cfg, jobs=3).to_dict()
    assert dumps(a) == dumps(b)
    paths = write_report(a, tmp_path)
    assert json.loads((tmp_path / "generalized.json").read_text()) == json.loads(dumps(a))
    assert {p.suffix for p in paths} == {".json", ".md"}


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(n_folds=1)
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(upsample_fractions=(0.0, 1.0))
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({"folds": 5})
    cfg = _cfg(target_participant="P001")
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
