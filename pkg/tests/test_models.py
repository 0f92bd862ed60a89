import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aeroload import trees
from aeroload.errors import (FeatureWidthMismatchError, InvalidModelSpecError,
                             LengthMismatchError, SingleClassTrainingError)
from aeroload.models import (ModelSpec, balanced_accuracy, confusion_matrix, evaluate, fit,
                             load_model, predict, save_model)

KINDS = ("LDA", "SVM", "RF", "GBT")
FAST = {"RF": {"n_trees": 30}, "GBT": {"n_trees": 40}}


def _spec(kind, seed=0, **hp):
    return ModelSpec(kind, seed, {**FAST.get(kind, {}), **hp})


def blobs(rng, n=300, shift=4.0):
    y = np.arange(n) % 3
    centres = np.array([[0, 0], [shift, shift], [2 * shift, 0]])
    return centres[y] + rng.normal(size=(n, 2)), y


def symmetric_xor(rng, n=400):
    # one quadrant reflected into all four so no axis carries a linear signal
    base = rng.uniform(0.1, 1.0, (n // 4, 2))
    X = np.vstack([base * [1, 1], base * [-1, -1], base * [1, -1], base * [-1, 1]])
    y = np.r_[np.zeros(n // 2, int), np.ones(n // 2, int)]
    return X, y


@pytest.mark.parametrize("kind", KINDS)
def test_blobs_are_separated(kind):
    rng = np.random.default_rng(0)
    X, y = blobs(rng)
    Xt, yt = blobs(rng)
    model = fit(_spec(kind), X, y)
    assert balanced_accuracy(yt, predict(model, Xt)) >= 0.95


def random_xor(rng, n=400):
    X = rng.uniform(-1, 1, (n, 2))
    return X, (X[:, 0] * X[:, 1] > 0).astype(int)


@pytest.mark.parametrize("kind", ["RF", "GBT"])
def test_trees_solve_xor(kind):
    # exact symmetry gives every root split zero gain, so sample it randomly
    rng = np.random.default_rng(1)
    X, y = random_xor(rng)
    Xt, yt = random_xor(rng)
    model = fit(_spec(kind, **({"max_depth": 4, "n_trees": 100} if kind == "GBT" else {})), X, y)
    assert balanced_accuracy(yt, predict(model, Xt)) >= 0.95


@pytest.mark.parametrize("kind", ["LDA", "SVM"])
def test_linear_models_fail_xor(kind):
    rng = np.random.default_rng(1)
    X, y = symmetric_xor(rng)
    Xt, yt = symmetric_xor(rng)
    assert balanced_accuracy(yt, predict(fit(_spec(kind), X, y), Xt)) <= 0.7


def test_single_class_rejected():
    with pytest.raises(SingleClassTrainingError):
        fit(_spec("GBT"), np.zeros((5, 2)), np.zeros(5, int))
    # zero weights remove the only other class
    with pytest.raises(SingleClassTrainingError):
        fit(_spec("LDA"), np.eye(3), [0, 0, 1], sample_weight=[1, 1, 0])


def test_spec_validation():
    with pytest.raises(InvalidModelSpecError):
        ModelSpec("XGB", 0)
    with pytest.raises(InvalidModelSpecError):
        ModelSpec("GBT", 0, {"depth": 3})
    with pytest.raises(InvalidModelSpecError):
        ModelSpec("RF", 0, {"n_trees": 0})
    assert ModelSpec("gbt", 0).kind == "GBT"


def test_width_mismatch_and_name_binding():
    rng = np.random.default_rng(2)
    X, y = blobs(rng, 90)
    X = np.hstack([X, rng.normal(size=(90, 1))])
    model = fit(_spec("LDA"), X, y, feature_names=["a", "b", "c"])
    with pytest.raises(FeatureWidthMismatchError):
        predict(model, X[:, :2])
    perm = [2, 0, 1]
    p1 = predict(model, X)
    p2 = predict(model, X[:, perm], feature_names=["c", "a", "b"])
    assert np.array_equal(p1, p2)
    with pytest.raises(FeatureWidthMismatchError):
        predict(model, X, feature_names=["a", "b", "z"])


@pytest.mark.parametrize("kind", KINDS)
def test_save_load_round_trip(kind, tmp_path):
    rng = np.random.default_rng(3)
    X, y = blobs(rng, 120)
    model = fit(_spec(kind), X, y, feature_names=["x", "y"])
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    Xt, _ = blobs(rng, 60)
    assert np.array_equal(model.scores(Xt), back.scores(Xt))
    assert back.feature_names == ("x", "y")


@pytest.mark.parametrize("kind", KINDS)
def test_fit_is_deterministic(kind):
    rng = np.random.default_rng(4)
    X, y = blobs(rng, 150, shift=1.5)
    a = fit(_spec(kind, seed=9), X, y).scores(X)
    b = fit(_spec(kind, seed=9), X, y).scores(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["LDA", "RF", "GBT", "SVM"])
def test_integer_weight_equals_duplication(kind):
    rng = np.random.default_rng(5)
    X, y = blobs(rng, 60, shift=1.0)
    w = rng.integers(1, 4, 60)
    hp = {"bootstrap": False} if kind == "RF" else {}
    a = fit(_spec(kind, **hp), X, y, sample_weight=w)
    b = fit(_spec(kind, **hp), np.repeat(X, w, axis=0), np.repeat(y, w))
    Xt, _ = blobs(rng, 200, shift=1.0)
    assert np.array_equal(predict(a, Xt), predict(b, Xt))


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_trees_invariant_to_monotone_transforms(seed):
    rng = np.random.default_rng(seed)
    X, y = blobs(rng, 120, shift=1.0)
    f = lambda Z: np.exp(Z / 3) * 7 + Z ** 3   # strictly increasing
    for kind in ("RF", "GBT"):
        spec = _spec(kind, seed=seed % 100, n_trees=10)
        a = predict(fit(spec, X, y), X)
        b = predict(fit(spec, f(X), y), f(X))
        assert np.array_equal(a, b)


def test_gbt_training_loss_never_increases():
    rng = np.random.default_rng(6)
    X, y = blobs(rng, 200, shift=1.0)
    _, losses = trees.fit_gbt(X, y, np.ones(len(y)), 3, n_trees=60, record_loss=True)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.5 * losses[0]


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_lda_invariant_to_whitening(seed):
    rng = np.random.default_rng(seed)
    X, y = blobs(rng, 90, shift=1.0)
    A = rng.normal(size=(2, 2)) + 3 * np.eye(2)
    b = rng.normal(size=2)
    p1 = predict(fit(_spec("LDA"), X, y), X)
    p2 = predict(fit(_spec("LDA"), X @ A.T + b, y), X @ A.T + b)
    assert np.mean(p1 == p2) >= 0.99


def test_lda_degenerate_covariance_is_ridged():
    rng = np.random.default_rng(7)
    X, y = blobs(rng, 90)
    X = np.hstack([X, X[:, :1]])            # duplicated column
    model = fit(_spec("LDA", ridge=1e-18), X, y)
    assert model.notes["ridge_escalations"] > 0
    assert balanced_accuracy(y, predict(model, X)) > 0.95


def test_metrics_examples():
    y = [0, 0, 1, 1, 2, 2]
    p = [0, 1, 1, 1, 2, 0]
    m = evaluate(y, p)
    assert m.balanced_accuracy == pytest.approx((0.5 + 1 + 0.5) / 3)
    assert confusion_matrix(y, p).tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 1]]
    with pytest.raises(LengthMismatchError):
        evaluate([0, 1], [0])


def test_balanced_accuracy_ignores_absent_classes():
    assert balanced_accuracy([0, 0, 1], [0, 0, 1]) == 1.0
    assert evaluate([0, 0, 1], [0, 0, 1]).to_dict()["per_class_recall"][2] is None


@given(st.lists(st.integers(0, 2), min_size=1, max_size=50), st.integers(0, 1000))
def test_balanced_accuracy_range(y, seed):
    p = np.random.default_rng(seed).integers(0, 3, len(y))
    ba = balanced_accuracy(y, p)
    assert 0.0 <= ba <= 1.0
    assert balanced_accuracy(y, y) == 1.0
