"""Cross-validation protocols: generalized (across participants), individualized
(across one participant's tasks with upsampled target rows), modality
ablation, and the expected-difficulty baseline."""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .core import FLIGHT_TASK_TABLE, Modality
from .errors import (
    ComponentCountTooLargeError,
    InvalidConfigError,
    TargetNotFoundError,
    TooFewParticipantsError,
    TooFewTasksError,
    UnknownModalityError,
)
from .features import (
    NO_LABEL,
    PCA,
    FeatureTable,
    KNNImputer,
    difficulty_band,
)
from .models import Metrics, ModelSpec, evaluate, fit, predict
from .pipeline import parallel_map

PROTOCOLS = ("generalized", "individualized", "ablation", "baseline")
DEFAULT_SWEEP = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class ExperimentConfig:
    n_folds: int = 5
    seed: int = 0
    model: ModelSpec = field(default_factory=lambda: ModelSpec("GBT", 0))
    upsample_fractions: tuple[float, ...] = DEFAULT_SWEEP
    target_participant: str | None = None
    modalities_to_ablate: tuple[str, ...] = ()
    ablation_protocol: str = "generalized"
    knn_k: int = 5
    pca: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidConfigError("n_folds must be >= 2")
        fr = tuple(float(p) for p in self.upsample_fractions)
        if any(not 0 <= p < 1 for p in fr):
            raise InvalidConfigError("upsample fractions must lie in [0, 1)")
        object.__setattr__(self, "upsample_fractions", fr)
        object.__setattr__(self, "modalities_to_ablate", tuple(self.modalities_to_ablate))
        if self.ablation_protocol not in ("generalized", "individualized"):
            raise InvalidConfigError("ablation_protocol must be generalized or individualized")
        if self.knn_k < 1:
            raise InvalidConfigError("knn_k must be >= 1")
        if self.pca is not None:
            object.__setattr__(self, "pca", tuple((str(m), int(n)) for m, n in self.pca))

    def to_dict(self) -> dict:
        return {"n_folds": self.n_folds, "seed": self.seed, "model": self.model.to_dict(),
                "upsample_fractions": list(self.upsample_fractions),
                "target_participant": self.target_participant,
                "modalities_to_ablate": list(self.modalities_to_ablate),
                "ablation_protocol": self.ablation_protocol, "knn_k": self.knn_k,
                "pca": None if self.pca is None else [list(x) for x in self.pca]}

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        seed = int(d.get("seed", 0))
        model = d.get("model") or {"kind": "GBT"}
        d["model"] = ModelSpec(model.get("kind", "GBT"), model.get("seed", seed),
                               model.get("hyperparams", {}))
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise InvalidConfigError(f"unknown experiment keys {sorted(bad)}")
        if "upsample_fractions" in d:
            d["upsample_fractions"] = tuple(d["upsample_fractions"])
        if d.get("pca") is not None:
            d["pca"] = tuple(tuple(x) for x in d["pca"])
        return cls(**d)


@dataclass
class ExperimentReport:
    protocol: str
    folds: list[dict]
    aggregate: dict
    config: dict
    upsampling_curve: list[tuple[float, float]] = field(default_factory=list)
    per_target: dict = field(default_factory=dict)
    ablation_rows: list[dict] = field(default_factory=list)
    baseline: dict = field(default_factory=dict)
    versions: dict = field(default_factory=lambda: {"aeroload": __version__,
                                                    "numpy": np.__version__})

    @property
    def balanced_accuracy(self) -> float:
        return self.aggregate["balanced_accuracy"]

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "config": self.config,
                "config_hash": config_hash(self.config), "versions": self.versions,
                "aggregate": self.aggregate, "folds": self.folds,
                "upsampling_curve": [[p, a] for p, a in self.upsampling_curve],
                "per_target": self.per_target, "ablation_rows": self.ablation_rows,
                "baseline": self.baseline}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# folds and upsampling


def round_robin_folds(items: Sequence, n_folds: int, rng: np.random.Generator) -> list[list]:
    """Seeded shuffle then deal into ``n_folds`` piles; sizes differ by at most one."""
    perm = rng.permutation(len(items))
    folds = [[] for _ in range(n_folds)]
    for pos, idx in enumerate(perm):
        folds[pos % n_folds].append(items[idx])
    return [sorted(f) for f in folds]


def participant_folds(participants: Sequence[str], n_folds: int, seed: int) -> list[list[str]]:
    return round_robin_folds(sorted(participants), n_folds, np.random.default_rng([seed, 1]))


def upsample_count(n_others: int, p: float) -> int:
    """Target rows needed so they form fraction ``p`` of the pooled training set."""
    if p <= 0:
        return 0
    return int(np.floor(p * n_others / (1.0 - p) + 0.5))


def upsample_multiplicity(n_others: int, n_target: int, p: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Copies of each target row: the whole set ``t // n`` times, then the
    first ``t % n`` rows of a seeded order once more."""
    t = upsample_count(n_others, p)
    reps = np.full(n_target, t // n_target, dtype=np.int64)
    reps[rng.permutation(n_target)[: t % n_target]] += 1
    return reps


# --------------------------------------------------------------------------
# per-fold preprocessing


class FoldPreprocessor:
    """KNN imputation and block PCA fitted on training rows only."""

    def __init__(self, table: FeatureTable, pca: Sequence[tuple[str, int]], k: int):
        self.k = k
        self.blocks = []
        for modality, n in pca:
            cols = table.columns_of(modality)
            if len(cols) == 0:
                continue
            if n > len(cols):
                raise ComponentCountTooLargeError(
                    f"{n} components requested for {modality} block of width {len(cols)}")
            self.blocks.append((modality, cols, n))
        in_block = set(c for _, cols, _ in self.blocks for c in cols.tolist())
        self.plain = np.array([c for c in range(table.X.shape[1]) if c not in in_block], dtype=np.int64)
        names = [table.feature_names[c] for c in self.plain]
        for modality, _, n in self.blocks:
            names += [f"{modality}.pc{j + 1}" for j in range(n)]
        self.feature_names = tuple(names)

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        self.imputer = KNNImputer(self.k).fit(X)
        Xi = self.imputer.transform(X, self_rows=True)
        self.pcas = [PCA(n).fit(Xi[:, cols]) for _, cols, n in self.blocks]
        return self._project(Xi)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self._project(self.imputer.transform(X))

    def _project(self, Xi: np.ndarray) -> np.ndarray:
        parts = [Xi[:, self.plain]]
        parts += [pca.transform(Xi[:, cols]) for pca, (_, cols, _) in zip(self.pcas, self.blocks)]
        return np.hstack(parts)


def _pca_spec(table: FeatureTable, cfg: ExperimentConfig) -> tuple[tuple[str, int], ...]:
    if cfg.pca is not None:
        return cfg.pca
    agg = table.meta.get("aggregation", {}) if table.meta else {}
    return tuple((str(m), int(n)) for m, n in agg.get("pca", []))


FoldHook = Callable[[dict], None]


def _fit_eval(table, cfg, train_rows, weights, val_rows, hook=None, info=None) -> tuple[Metrics, dict]:
    pre = FoldPreprocessor(table, _pca_spec(table, cfg), cfg.knn_k)
    Xtr = pre.fit_transform(table.X[train_rows])
    Xva = pre.transform(table.X[val_rows])
    model = fit(cfg.model, Xtr, table.labels[train_rows], sample_weight=weights,
                feature_names=pre.feature_names)
    y_pred = predict(model, Xva)
    if hook is not None:
        hook({**(info or {}), "train_rows": np.asarray(train_rows), "val_rows": np.asarray(val_rows),
              "preprocessor": pre, "model": model})
    return evaluate(table.labels[val_rows], y_pred), model.notes


def _aggregate(metrics: list[Metrics]) -> dict:
    ba = [m.balanced_accuracy for m in metrics]
    recall = np.array([m.per_class_recall for m in metrics])
    with np.errstate(invalid="ignore"):
        mean_recall = [None if np.all(np.isnan(recall[:, c])) else float(np.nanmean(recall[:, c]))
                       for c in range(recall.shape[1])]
    return {"balanced_accuracy": float(np.mean(ba)), "fold_std": float(np.std(ba)),
            "confusion": sum(m.confusion for m in metrics).tolist(),
            "per_class_recall": mean_recall}


# --------------------------------------------------------------------------
# protocols


def _labeled(table: FeatureTable) -> FeatureTable:
    return table.select_rows(np.flatnonzero(table.labels != NO_LABEL))


def generalized_cv(table: FeatureTable, cfg: ExperimentConfig, jobs: int = 1,
                   on_fold: FoldHook | None = None) -> ExperimentReport:
    """Participant-wise K-fold CV; imputer, PCA and model see training participants only."""
    table = _labeled(table)
    parts = table.participants
    if len(parts) < cfg.n_folds:
        raise TooFewParticipantsError(f"{len(parts)} participants for {cfg.n_folds} folds")
    folds = participant_folds(parts, cfg.n_folds, cfg.seed)

    def run(k):
        held = set(folds[k])
        val = np.array([i for i, p in enumerate(table.participant_ids) if p in held])
        train = np.array([i for i, p in enumerate(table.participant_ids) if p not in held])
        m, notes = _fit_eval(table, cfg, train, None, val, on_fold, {"fold": k})
        return {"fold": k, "participants": folds[k], "n_train_rows": len(train),
                "n_val_rows": len(val), "metrics": m, "notes": notes}

    results = parallel_map(run, range(cfg.n_folds), jobs)
    return ExperimentReport(
        "generalized",
        [{**r, "metrics": r["metrics"].to_dict()} for r in results],
        _aggregate([r["metrics"] for r in results]), cfg.to_dict())


def _target_seed(cfg: ExperimentConfig, target: str) -> list[int]:
    return [cfg.seed, 2, zlib.crc32(target.encode("utf-8"))]


def individualized_cv(table: FeatureTable, cfg: ExperimentConfig, target: str | None = None,
                      jobs: int = 1, on_fold: FoldHook | None = None) -> ExperimentReport:
    """Task-wise K-fold CV for one target with the training pool upsampled
    so target rows make up each fraction ``p`` of it."""
    table = _labeled(table)
    target = target if target is not None else cfg.target_participant
    if target is None or target not in set(table.participant_ids.tolist()):
        raise TargetNotFoundError(f"target participant {target!r} not in table")
    own = np.flatnonzero(table.participant_ids == target)
    others = np.flatnonzero(table.participant_ids != target)
    if len(own) < cfg.n_folds:
        raise TooFewTasksError(f"{target} has {len(own)} labeled tasks for {cfg.n_folds} folds")
    seed = _target_seed(cfg, target)
    folds = round_robin_folds(list(own), cfg.n_folds, np.random.default_rng(seed))
    units = [(pi, p, k) for pi, p in enumerate(cfg.upsample_fractions) for k in range(cfg.n_folds)]

    def run(unit):
        pi, p, k = unit
        val = np.array(folds[k])
        tr_own = np.array(sorted(set(own.tolist()) - set(folds[k])))
        reps = upsample_multiplicity(len(others), len(tr_own), p,
                                     np.random.default_rng(seed + [k, pi]))
        keep = reps > 0
        train = np.concatenate([others, tr_own[keep]])
        weights = np.concatenate([np.ones(len(others)), reps[keep].astype(np.float64)])
        m, notes = _fit_eval(table, cfg, train, weights, val, on_fold,
                             {"fold": k, "fraction": p, "target": target})
        return {"fold": k, "fraction": p, "n_target_copies": int(reps.sum()),
                "val_rows": len(val), "metrics": m, "notes": notes}

    results = parallel_map(run, units, jobs)
    curve = []
    for p in cfg.upsample_fractions:
        curve.append((p, float(np.mean([r["metrics"].balanced_accuracy
                                         for r in results if r["fraction"] == p]))))
    best = max(range(len(curve)), key=lambda i: (curve[i][1], -i))
    best_p = curve[best][0]
    chosen = [r for r in results if r["fraction"] == best_p]
    agg = _aggregate([r["metrics"] for r in chosen])
    agg["best_fraction"] = best_p
    return ExperimentReport(
        "individualized",
        [{**r, "metrics": r["metrics"].to_dict()} for r in results],
        agg, {**cfg.to_dict(), "target_participant": target}, upsampling_curve=curve)


def individualized_all(table: FeatureTable, cfg: ExperimentConfig, targets: Sequence[str] | None = None,
                       jobs: int = 1) -> ExperimentReport:
    """Individualized CV for each target; the curve is the mean over targets."""
    table = _labeled(table)
    if targets is None:
        counts = {p: int((table.participant_ids == p).sum()) for p in table.participants}
        targets = [p for p in table.participants if counts[p] >= cfg.n_folds]
    if not targets:
        raise TooFewTasksError("no participant has enough labeled tasks")
    reports = parallel_map(lambda t: individualized_cv(table, cfg, t), sorted(targets), jobs)
    fr = cfg.upsample_fractions
    curve = [(p, float(np.mean([r.upsampling_curve[i][1] for r in reports])))
             for i, p in enumerate(fr)]
    best = max(range(len(curve)), key=lambda i: (curve[i][1], -i))
    per_target = {t: {"curve": [[p, a] for p, a in r.upsampling_curve],
                      "best_fraction": r.aggregate["best_fraction"],
                      "best_balanced_accuracy": r.balanced_accuracy}
                  for t, r in zip(sorted(targets), reports)}
    folds = [{"target": t, **f} for t, r in zip(sorted(targets), reports) for f in r.folds
             if f["fraction"] == curve[best][0]]
    agg = {"balanced_accuracy": curve[best][1], "best_fraction": curve[best][0],
           "n_targets": len(reports)}
    return ExperimentReport("individualized", folds, agg, cfg.to_dict(), upsampling_curve=curve,
                            per_target=per_target)


def _protocol_score(table, cfg, jobs, targets=None) -> float:
    if cfg.ablation_protocol == "generalized":
        return generalized_cv(table, cfg, jobs).balanced_accuracy
    return individualized_all(table, cfg, targets, jobs).balanced_accuracy


def ablation(table: FeatureTable, cfg: ExperimentConfig, baseline_report: ExperimentReport | None = None,
             jobs: int = 1, targets: Sequence[str] | None = None) -> ExperimentReport:
    """Drop each modality's columns in turn and rerun the same protocol."""
    present = table.modalities()
    wanted = list(cfg.modalities_to_ablate) or present
    for m in wanted:
        if m not in present:
            valid = {x.value for x in Modality}
            raise UnknownModalityError(
                f"{m!r} is not a modality of this table" if m in valid else f"unknown modality {m!r}")
    if baseline_report is None:
        base = _protocol_score(table, cfg, jobs, targets)
    else:
        base = baseline_report.balanced_accuracy
    # folds parallelise inside each arm; arms run in order
    rows = []
    for m in wanted:
        acc = _protocol_score(table.drop_modality(m), cfg, jobs, targets)
        rows.append({"modality": m, "baseline": base, "ablated": acc, "accuracy_drop": base - acc})
    return ExperimentReport("ablation", [], {"balanced_accuracy": base}, cfg.to_dict(),
                            ablation_rows=rows)


def baseline_protocol(table: FeatureTable, cfg: ExperimentConfig) -> ExperimentReport:
    """Predict labels from the banded expected difficulty of each task group."""
    table = _labeled(table)
    diffs = (table.meta or {}).get("task_difficulty")
    if not diffs:
        diffs = {}
        for row in FLIGHT_TASK_TABLE:
            diffs.setdefault(str(row[4]), []).append(row[1])
    mean_d = {int(g): float(np.mean(v)) for g, v in diffs.items()}
    pred = np.array([difficulty_band(mean_d[int(g)]) for g in table.task_groups])
    per_group = {}
    for g in sorted(set(table.task_groups.tolist())):
        sel = table.task_groups == g
        per_group[str(g)] = {"expected_difficulty": mean_d[g],
                             "predicted": int(difficulty_band(mean_d[g])),
                             "accuracy": float(np.mean(pred[sel] == table.labels[sel])),
                             "n": int(sel.sum())}
    m = evaluate(table.labels, pred)
    agg = m.to_dict()
    agg["accuracy"] = float(np.mean(pred == table.labels))
    return ExperimentReport("baseline", [], agg, cfg.to_dict(), baseline={"per_group": per_group})
