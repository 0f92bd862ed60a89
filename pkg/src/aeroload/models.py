"""Classifier suite (LDA, linear SVM, random forest, gradient boosting) and metrics.

All learners accept per-row ``sample_weight``; an integer weight is
equivalent to duplicating the row that many times.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import trees
from .errors import (
    FeatureWidthMismatchError,
    InvalidModelSpecError,
    LengthMismatchError,
    SingleClassTrainingError,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
N_LABELS = 3

DEFAULTS: dict[str, dict] = {
    "LDA": {"ridge": 1e-9},
    "SVM": {"C": 1.0, "epochs": 300},
    "RF": {"n_trees": 100, "max_depth": 32, "max_features": "sqrt", "bootstrap": True},
    "GBT": {"n_trees": 200, "max_depth": 4, "learning_rate": 0.1, "reg_lambda": 1.0,
            "min_child_weight": 1.0},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    seed: int
    hyperparams: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in DEFAULTS:
            raise InvalidModelSpecError(f"unknown model kind {self.kind!r}")
        if self.seed is None:
            raise InvalidModelSpecError("seed is mandatory")
        unknown = set(self.hyperparams) - set(DEFAULTS[kind])
        if unknown:
            raise InvalidModelSpecError(f"unknown {kind} hyperparameters {sorted(unknown)}")
        hp = {**DEFAULTS[kind], **self.hyperparams}
        for key in ("n_trees", "max_depth", "epochs"):
            if key in hp and (int(hp[key]) != hp[key] or hp[key] < 1):
                raise InvalidModelSpecError(f"{key} must be a positive integer")
        for key in ("learning_rate", "C"):
            if key in hp and not hp[key] > 0:
                raise InvalidModelSpecError(f"{key} must be positive")
        for key in ("reg_lambda", "min_child_weight", "ridge"):
            if key in hp and not hp[key] >= 0:
                raise InvalidModelSpecError(f"{key} must be non-negative")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "hyperparams", hp)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "hyperparams": dict(self.hyperparams)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], d.get("seed", 0), d.get("hyperparams", {}))


@dataclass(eq=False)
class TrainedModel:
    spec: ModelSpec
    classes: np.ndarray
    n_features: int
    params: dict
    feature_names: tuple[str, ...] | None = None
    notes: dict = field(default_factory=dict)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return _SCORERS[self.spec.kind](self, X)


# --------------------------------------------------------------------------
# learners


def _lda_fit(spec, X, y, w, k):
    W = w.sum()
    means = np.array([(w[y == c, None] * X[y == c]).sum(0) / w[y == c].sum() for c in range(k)])
    R = X - means[y]
    cov = (R * w[:, None]).T @ R / max(W - k, 1.0)
    d = X.shape[1]
    ridge = spec.hyperparams["ridge"] * (np.trace(cov) / d if np.trace(cov) > 0 else 1.0)
    escalations = 0
    while True:
        reg = cov + ridge * np.eye(d)
        if np.linalg.cond(reg) < 1e12 or escalations >= 30:
            break
        ridge *= 10.0
        escalations += 1
    if escalations:
        log.info("LDA covariance degenerate; ridge raised %d times to %g", escalations, ridge)
    coef = np.linalg.solve(reg, means.T).T
    priors = np.array([w[y == c].sum() / W for c in range(k)])
    intercept = -0.5 * np.einsum("kd,kd->k", coef, means) + np.log(priors)
    return {"coef": coef, "intercept": intercept}, {"ridge": ridge, "ridge_escalations": escalations}


def _lda_scores(model, X):
    return X @ model.params["coef"].T + model.params["intercept"]


def _standardizer(X, w):
    mu = (w[:, None] * X).sum(0) / w.sum()
    sd = np.sqrt((w[:, None] * (X - mu) ** 2).sum(0) / w.sum())
    return mu, np.where(sd > 0, sd, 1.0)


def _svm_fit(spec, X, y, w, k):
    """One-vs-rest hinge loss, full-batch Pegasos iterations, averaged second half."""
    mu, sd = _standardizer(X, w)
    Z = np.hstack([(X - mu) / sd, np.ones((X.shape[0], 1))])
    n, d = Z.shape
    # regularise against the total weight so integer weights equal duplication
    lam = 1.0 / (spec.hyperparams["C"] * w.sum())
    wn = w / w.mean()
    epochs = int(spec.hyperparams["epochs"])
    coef = np.zeros((k, d))
    for c in range(k):
        s = np.where(y == c, 1.0, -1.0)
        v = np.zeros(d)
        avg = np.zeros(d)
        n_avg = 0
        for t in range(1, epochs + 1):
            viol = s * (Z @ v) < 1.0
            grad = (wn[viol] * s[viol]) @ Z[viol] / n
            v = (1.0 - 1.0 / t) * v + grad / (lam * t)
            norm = np.linalg.norm(v)
            cap = 1.0 / np.sqrt(lam)
            if norm > cap:
                v *= cap / norm
            if t > epochs // 2:
                avg += v
                n_avg += 1
        coef[c] = avg / n_avg
    return {"coef": coef, "mean": mu, "scale": sd}, {}


def _svm_scores(model, X):
    p = model.params
    Z = np.hstack([(X - p["mean"]) / p["scale"], np.ones((X.shape[0], 1))])
    return Z @ p["coef"].T


def _rf_fit(spec, X, y, w, k):
    hp = spec.hyperparams
    forest = trees.fit_forest(X, y, w, k, spec.seed, n_trees=int(hp["n_trees"]),
                              max_depth=int(hp["max_depth"]), max_features=hp["max_features"],
                              bootstrap=bool(hp["bootstrap"]))
    return {"trees": forest}, {}


def _rf_scores(model, X):
    return trees.forest_votes(model.params["trees"], X, len(model.classes))


def _gbt_fit(spec, X, y, w, k):
    hp = spec.hyperparams
    rounds, _ = trees.fit_gbt(X, y, w, k, n_trees=int(hp["n_trees"]),
                              max_depth=int(hp["max_depth"]),
                              learning_rate=float(hp["learning_rate"]),
                              reg_lambda=float(hp["reg_lambda"]),
                              min_child_weight=float(hp["min_child_weight"]))
    return {"rounds": rounds}, {}


def _gbt_scores(model, X):
    return trees.gbt_scores(model.params["rounds"], X, len(model.classes))


_FITTERS = {"LDA": _lda_fit, "SVM": _svm_fit, "RF": _rf_fit, "GBT": _gbt_fit}
_SCORERS = {"LDA": _lda_scores, "SVM": _svm_scores, "RF": _rf_scores, "GBT": _gbt_scores}


def fit(spec: ModelSpec, X, y, sample_weight=None,
        feature_names: Sequence[str] | None = None) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise LengthMismatchError(f"X has {len(X)} rows, y has {len(y)}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix must be complete and finite")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if len(w) != len(y) or (w < 0).any():
        raise LengthMismatchError("sample_weight must be non-negative with one entry per row")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    classes = np.unique(y)
    if len(classes) < 2 or len(y) < 2:
        raise SingleClassTrainingError(f"training labels cover classes {classes.tolist()}")
    yi = np.searchsorted(classes, y)
    params, notes = _FITTERS[spec.kind](spec, X, yi, w, len(classes))
    names = tuple(feature_names) if feature_names is not None else None
    return TrainedModel(spec, classes, X.shape[1], params, names, notes)


def predict(model: TrainedModel, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """Labels for ``X``; when ``feature_names`` is given, columns are matched
    to the model's binding by name."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if feature_names is not None and model.feature_names is not None:
        index = {n: i for i, n in enumerate(feature_names)}
        try:
            X = X[:, [index[n] for n in model.feature_names]]
        except KeyError as exc:
            raise FeatureWidthMismatchError(f"feature {exc.args[0]!r} not supplied") from None
    if X.shape[1] != model.n_features:
        raise FeatureWidthMismatchError(f"model expects {model.n_features} features, got {X.shape[1]}")
    S = model.scores(X)
    return model.classes[np.argmax(S, axis=1)]


# --------------------------------------------------------------------------
# persistence


def _encode(obj):
    if isinstance(obj, trees.Tree):
        return {"__tree__": obj.to_dict()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__tree__" in obj:
            return trees.Tree.from_dict(obj["__tree__"])
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def save_model(model: TrainedModel, path) -> None:
    doc = {"format_version": FORMAT_VERSION, "spec": model.spec.to_dict(),
           "classes": model.classes.tolist(), "n_features": model.n_features,
           "feature_names": list(model.feature_names) if model.feature_names else None,
           "params": _encode(model.params), "notes": _encode(model.notes)}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise InvalidModelSpecError(f"unsupported model format {doc.get('format_version')}")
    names = tuple(doc["feature_names"]) if doc["feature_names"] else None
    return TrainedModel(ModelSpec.from_dict(doc["spec"]), np.array(doc["classes"], dtype=np.int64),
                        doc["n_features"], _decode(doc["params"]), names, _decode(doc["notes"]))


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metrics:
    balanced_accuracy: float
    confusion: np.ndarray
    per_class_recall: np.ndarray

    def to_dict(self) -> dict:
        return {"balanced_accuracy": self.balanced_accuracy,
                "confusion": self.confusion.tolist(),
                "per_class_recall": [None if np.isnan(r) else float(r)
                                     for r in self.per_class_recall]}


def confusion_matrix(y_true, y_pred, n_classes: int = N_LABELS) -> np.ndarray:
    C = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(C, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return C


def evaluate(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) != len(y_pred):
        raise LengthMismatchError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise LengthMismatchError("need at least one label")
    C = confusion_matrix(y_true, y_pred)
    support = C.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(support > 0, np.diag(C) / support, np.nan)
    return Metrics(float(np.mean(recall[support > 0])), C, recall)


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean recall over the classes present in ``y_true``."""
    return evaluate(y_true, y_pred).balanced_accuracy
