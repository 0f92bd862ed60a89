"""Per-task feature aggregation, TLX label derivation, PCA and KNN imputation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .core import FlightTask, Modality, SessionRecording, TlxResponse
from .errors import (
    ColumnFullyMissingError,
    ComponentCountTooLargeError,
    ManifestParseError,
    MissingValuesPresentError,
    TooFewResponsesError,
    UnknownModalityError,
    UnknownTaskGroupError,
)

log = logging.getLogger(__name__)

LOW, MEDIUM, HIGH = 0, 1, 2
LABEL_NAMES = ("Low", "Medium", "High")
NO_LABEL = -1
MISSING_TOKEN = "__missing__"
STATISTICS = ("mean", "std", "min", "max", "norm_mean", "norm_min", "norm_max")
FORMAT_VERSION = 1


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AggregationSpec:
    """Which statistics to compute per modality, and which blocks to reduce by PCA."""

    stats: Mapping[Modality, tuple[str, ...]]
    pca: tuple[tuple[Modality, int], ...] = ()

    def __post_init__(self):
        clean = {}
        for m, sel in self.stats.items():
            sel = tuple(s for s in STATISTICS if s in set(sel))
            bad = set(self.stats[m]) - set(STATISTICS)
            if bad:
                raise ValueError(f"unknown statistics {sorted(bad)} for {m.value}")
            if not sel:
                raise ValueError(f"empty statistic selection for {m.value}")
            clean[m] = sel
        object.__setattr__(self, "stats", clean)
        object.__setattr__(self, "pca", tuple((Modality(m), int(n)) for m, n in self.pca))

    @classmethod
    def default(cls) -> "AggregationSpec":
        base = ("mean", "std", "norm_mean")
        wide = ("mean", "std", "min", "max", "norm_mean")
        stats = {m: base for m in Modality}
        for m in (Modality.FSR, Modality.FLIGHT_CONTROL, Modality.FLIGHT_DERIVATIVE):
            stats[m] = wide
        return cls(stats, pca=((Modality.FNIRS, 3), (Modality.BODY_POSE, 3)))

    @classmethod
    def from_dict(cls, d: dict | None) -> "AggregationSpec":
        if not d:
            return cls.default()
        default = cls.default()
        stats = dict(default.stats)
        for name, sel in (d.get("stats") or {}).items():
            stats[Modality.parse(name)] = tuple(sel)
        for name in d.get("exclude", []):
            stats.pop(Modality.parse(name), None)
        pca = d.get("pca", [[m.value, n] for m, n in default.pca])
        return cls(stats, tuple((Modality.parse(m), int(n)) for m, n in pca))

    def to_dict(self) -> dict:
        return {"stats": {m.value: list(s) for m, s in self.stats.items()},
                "pca": [[m.value, n] for m, n in self.pca]}


@dataclass(frozen=True)
class LabelThresholds:
    sigma_multiplier: float = 0.6

    def __post_init__(self):
        if not self.sigma_multiplier > 0:
            raise ValueError("sigma_multiplier must be positive")


# --------------------------------------------------------------------------
# feature table


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """One row per (participant, task group); NaN marks an absent feature."""

    participant_ids: np.ndarray
    task_groups: np.ndarray
    X: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    provenance: Mapping[str, tuple[str, str]]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(len(self.participant_ids), -1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "participant_ids", np.asarray(self.participant_ids, dtype=object))
        object.__setattr__(self, "task_groups", np.asarray(self.task_groups, dtype=np.int64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        n, d = X.shape
        if not (len(self.participant_ids) == len(self.task_groups) == len(self.labels) == n):
            raise ValueError("row metadata and feature matrix disagree in length")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length does not match feature width")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    @property
    def participants(self) -> list[str]:
        return sorted(set(self.participant_ids.tolist()))

    @property
    def labeled(self) -> np.ndarray:
        return self.labels != NO_LABEL

    def modalities(self) -> list[str]:
        seen = []
        for name in self.feature_names:
            m = self.provenance[name][0]
            if m not in seen:
                seen.append(m)
        return seen

    def columns_of(self, modality) -> np.ndarray:
        key = modality.value if isinstance(modality, Modality) else str(modality)
        return np.array([i for i, n in enumerate(self.feature_names)
                         if self.provenance[n][0] == key], dtype=np.int64)

    def replace(self, **changes) -> "FeatureTable":
        kw = dict(participant_ids=self.participant_ids, task_groups=self.task_groups, X=self.X,
                  labels=self.labels, feature_names=self.feature_names,
                  provenance=self.provenance, meta=self.meta)
        kw.update(changes)
        return FeatureTable(**kw)

    def select_rows(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        return self.replace(participant_ids=self.participant_ids[rows],
                            task_groups=self.task_groups[rows], X=self.X[rows],
                            labels=self.labels[rows])

    def select_columns(self, cols) -> "FeatureTable":
        cols = np.asarray(cols, dtype=np.int64)
        names = tuple(self.feature_names[i] for i in cols)
        return self.replace(X=self.X[:, cols], feature_names=names,
                            provenance={n: self.provenance[n] for n in names})

    def drop_modality(self, modality) -> "FeatureTable":
        drop = set(self.columns_of(modality).tolist())
        if not drop:
            name = modality.value if isinstance(modality, Modality) else modality
            raise UnknownModalityError(f"no feature columns for modality {name!r}")
        return self.select_columns([i for i in range(self.X.shape[1]) if i not in drop])

    def equals(self, other: "FeatureTable") -> bool:
        return (self.feature_names == other.feature_names
                and dict(self.provenance) == dict(other.provenance)
                and np.array_equal(self.participant_ids, other.participant_ids)
                and np.array_equal(self.task_groups, other.task_groups)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.X, other.X, equal_nan=True))

    # -- serialisation -----------------------------------------------------

    def to_csv(self, path) -> tuple[Path, Path]:
        """Write ``path`` (CSV) and ``path.json`` (names, provenance, meta)."""
        path = Path(path)
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df = df.astype(object).where(~np.isnan(self.X), MISSING_TOKEN)
        df.insert(0, "label", [LABEL_NAMES[v] if v != NO_LABEL else "" for v in self.labels])
        df.insert(0, "task_group", self.task_groups)
        df.insert(0, "participant_id", self.participant_ids)
        df.to_csv(path, index=False, lineterminator="\n")
        side = path.with_suffix(path.suffix + ".json")
        doc = {"format_version": FORMAT_VERSION, "feature_names": list(self.feature_names),
               "provenance": {n: list(self.provenance[n]) for n in self.feature_names},
               "label_column": "label", "label_classes": list(LABEL_NAMES),
               "meta": _jsonable(self.meta)}
        side.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path, side

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        path = Path(path)
        side = path.with_suffix(path.suffix + ".json")
        try:
            doc = json.loads(side.read_text(encoding="utf-8"))
            df = pd.read_csv(path, dtype=str, keep_default_na=False)
        except FileNotFoundError as exc:
            raise ManifestParseError(f"feature table file missing: {exc.filename}", path=path) from None
        names = tuple(doc["feature_names"])
        if list(df.columns[3:]) != list(names):
            raise ManifestParseError("feature table CSV columns disagree with sidecar", path=path)
        raw = df[list(names)].to_numpy()
        X = np.where(raw == MISSING_TOKEN, "nan", raw).astype(np.float64) if raw.size \
            else np.zeros((len(df), len(names)))
        labels = np.array([LABEL_NAMES.index(v) if v else NO_LABEL for v in df["label"]],
                          dtype=np.int64)
        return cls(df["participant_id"].to_numpy(dtype=object),
                   df["task_group"].astype(np.int64).to_numpy(), X, labels, names,
                   {n: tuple(doc["provenance"][n]) for n in names}, doc.get("meta", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Modality):
        return obj.value
    return obj


# --------------------------------------------------------------------------
# aggregation


def _column_stats(x: np.ndarray) -> dict[str, np.ndarray]:
    n = x.shape[0]
    std = x.std(axis=0, ddof=1) if n > 1 else np.zeros(x.shape[1])
    return {"mean": x.mean(axis=0), "std": std, "min": x.min(axis=0), "max": x.max(axis=0)}


def feature_layout(spec: AggregationSpec) -> tuple[list[str], dict[str, tuple[str, str]]]:
    names, prov = [], {}
    for m in Modality:
        if m not in spec.stats:
            continue
        for col in m.columns:
            for stat in spec.stats[m]:
                name = f"{m.value}.{col}.{stat}"
                names.append(name)
                prov[name] = (m.value, stat)
    return names, prov


def aggregate_task(session: SessionRecording, task_group: int,
                   spec: AggregationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Feature vector and missing mask for one task group.

    Statistics run over in-task, non-artifact samples.  Normalised variants
    subtract the session-wide column mean and divide by its sample std (a
    zero std yields 0).  Missing modalities and empty windows are masked.
    """
    windows = session.group_windows(task_group)
    if not windows:
        raise UnknownTaskGroupError(f"{session.participant_id}: unknown task group {task_group}")
    values = []
    for m in Modality:
        if m not in spec.stats:
            continue
        sel = spec.stats[m]
        block = np.full((m.dim, len(sel)), np.nan)
        ch = session.channels.get(m)
        if ch is not None and not ch.raw:
            t = ch.timestamps
            in_task = np.zeros(len(t), dtype=bool)
            for a, b in windows:
                in_task |= (t >= a) & (t < b)
            in_task &= ch.clean
            if in_task.any():
                st = _column_stats(ch.samples[in_task])
                whole = ch.samples[ch.clean]
                mu = whole.mean(axis=0)
                sd = whole.std(axis=0, ddof=1) if len(whole) > 1 else np.zeros(m.dim)
                safe = np.where(sd > 0, sd, 1.0)
                for j, s in enumerate(sel):
                    if s.startswith("norm_"):
                        v = (st[s[5:]] - mu) / safe
                        block[:, j] = np.where(sd > 0, v, 0.0)
                    else:
                        block[:, j] = st[s]
            else:
                log.warning("%s: empty window for %s in task group %s",
                            session.participant_id, m.value, task_group)
        values.append(block.reshape(-1))
    vec = np.concatenate(values) if values else np.zeros(0)
    return vec, np.isnan(vec)


def derive_labels(tlx: Mapping[int, TlxResponse | float],
                  th: LabelThresholds = LabelThresholds()) -> dict[int, int]:
    """Low/Medium/High per task group from standardised mental-demand scores."""
    groups = sorted(tlx)
    if len(groups) < 2:
        raise TooFewResponsesError(f"need >= 2 task groups with responses, got {len(groups)}")
    scores = np.array([float(tlx[g].mental if isinstance(tlx[g], TlxResponse) else tlx[g])
                       for g in groups])
    mu = scores.mean()
    sigma = scores.std(ddof=1)
    if sigma == 0:
        return {g: MEDIUM for g in groups}
    lo, hi = mu - th.sigma_multiplier * sigma, mu + th.sigma_multiplier * sigma
    out = {}
    for g, s in zip(groups, scores):
        out[g] = LOW if s < lo else HIGH if s > hi else MEDIUM
    return out


def build_feature_table(sessions: Sequence[SessionRecording],
                        spec: AggregationSpec | None = None,
                        thresholds: LabelThresholds = LabelThresholds()) -> FeatureTable:
    """Aggregate every (participant, task group) into one table; rows sorted."""
    spec = spec or AggregationSpec.default()
    names, prov = feature_layout(spec)
    pids, groups, rows, labels = [], [], [], []
    for s in sorted(sessions, key=lambda s: s.participant_id):
        lab = derive_labels(s.tlx, thresholds) if len(s.tlx) >= 2 else {}
        for g in s.task_groups:
            vec, _ = aggregate_task(s, g, spec)
            pids.append(s.participant_id)
            groups.append(g)
            rows.append(vec)
            labels.append(lab.get(g, NO_LABEL))
    X = np.vstack(rows) if rows else np.zeros((0, len(names)))
    meta = {"aggregation": spec.to_dict(), "sigma_multiplier": thresholds.sigma_multiplier}
    return FeatureTable(np.array(pids, dtype=object), np.array(groups), X, np.array(labels),
                        tuple(names), prov, meta)


# --------------------------------------------------------------------------
# PCA


class PCA:
    """Eigen-decomposition of the sample covariance of centred data.

    Components are ordered by descending eigenvalue; each is signed so its
    largest-magnitude loading is positive.
    """

    def __init__(self, n_components: int):
        self.n_components = int(n_components)

    def fit(self, X: np.ndarray) -> "PCA":
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise MissingValuesPresentError("PCA input contains missing values")
        if self.n_components > X.shape[1] or self.n_components < 1:
            raise ComponentCountTooLargeError(
                f"{self.n_components} components requested for width {X.shape[1]}")
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        cov = Xc.T @ Xc / max(X.shape[0] - 1, 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(-evals, kind="stable")
        evals = np.clip(evals[order], 0.0, None)
        evecs = evecs[:, order]
        lead = np.argmax(np.abs(evecs), axis=0)
        signs = np.sign(evecs[lead, np.arange(evecs.shape[1])])
        signs[signs == 0] = 1.0
        evecs = evecs * signs
        self.eigenvalues_ = evals
        self.components_ = evecs[:, :self.n_components].T
        total = evals.sum()
        self.explained_variance_ratio_ = (evals[:self.n_components] / total if total > 0
                                          else np.zeros(self.n_components))
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise MissingValuesPresentError("PCA input contains missing values")
        return (X - self.mean_) @ self.components_.T


def pca_fit_transform(table: FeatureTable, modality, n_components: int,
                      rows=None) -> FeatureTable:
    """Replace a modality's feature block with its top principal components.

    The basis is fitted on ``rows`` (default: all rows) and applied to all.
    """
    cols = table.columns_of(modality)
    if len(cols) == 0:
        raise UnknownModalityError(f"no feature columns for {modality}")
    fit_rows = np.arange(table.n_rows) if rows is None else np.asarray(rows)
    pca = PCA(n_components).fit(table.X[np.ix_(fit_rows, cols)])
    proj = pca.transform(table.X[:, cols])
    return _splice_block(table, cols, proj, modality)


def _splice_block(table: FeatureTable, cols: np.ndarray, proj: np.ndarray, modality) -> FeatureTable:
    key = modality.value if isinstance(modality, Modality) else str(modality)
    first = int(cols[0])
    keep_before = [i for i in range(first) if i not in set(cols.tolist())]
    keep_after = [i for i in range(first, table.X.shape[1]) if i not in set(cols.tolist())]
    new_names = [f"{key}.pc{j + 1}" for j in range(proj.shape[1])]
    names = ([table.feature_names[i] for i in keep_before] + new_names
             + [table.feature_names[i] for i in keep_after])
    X = np.hstack([table.X[:, keep_before], proj, table.X[:, keep_after]])
    prov = {n: table.provenance[n] for n in names if n in table.provenance}
    prov.update({n: (key, "pca") for n in new_names})
    return table.replace(X=X, feature_names=tuple(names), provenance=prov)


# --------------------------------------------------------------------------
# KNN imputation


def nan_euclidean(q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Distances from ``q`` to each row of ``R`` over co-observed columns,
    scaled by ``sqrt(width / n_co_observed)``; ``inf`` when nothing overlaps."""
    width = R.shape[1]
    co = ~np.isnan(R) & ~np.isnan(q)
    diff = np.where(co, R - q, 0.0)
    d2 = (diff * diff).sum(axis=1)
    n_co = co.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.sqrt(width / n_co * d2)
    dist[n_co == 0] = np.inf
    return dist


class KNNImputer:
    """Fill missing cells with the mean of the k nearest reference rows.

    Only reference rows that observe the column are eligible; ties in
    distance go to the lower row index.  A cell with no eligible neighbour
    takes the reference column mean and is counted in ``n_fallback_``.
    """

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)

    def fit(self, X: np.ndarray) -> "KNNImputer":
        X = np.asarray(X, dtype=np.float64)
        observed = ~np.isnan(X)
        empty = np.flatnonzero(~observed.any(axis=0))
        if len(empty):
            raise ColumnFullyMissingError(f"columns with no observed value: {empty.tolist()}")
        self.reference_ = X.copy()
        self.column_means_ = np.array([math.fsum(X[observed[:, j], j]) / observed[:, j].sum()
                                       for j in range(X.shape[1])])
        return self

    def transform(self, X: np.ndarray, self_rows: bool = False) -> np.ndarray:
        """Impute ``X``; ``self_rows`` marks X as the fitted reference so each
        row cannot be its own neighbour."""
        X = np.asarray(X, dtype=np.float64)
        R = self.reference_
        out = X.copy()
        self.n_fallback_ = 0
        ref_obs = ~np.isnan(R)
        for i in np.flatnonzero(np.isnan(X).any(axis=1)):
            dist = nan_euclidean(X[i], R)
            if self_rows:
                dist[i] = np.inf
            for c in np.flatnonzero(np.isnan(X[i])):
                cand = np.flatnonzero(ref_obs[:, c] & np.isfinite(dist))
                if len(cand) == 0:
                    out[i, c] = self.column_means_[c]
                    self.n_fallback_ += 1
                    continue
                order = np.lexsort((cand, dist[cand]))
                chosen = np.sort(cand[order[:self.k]])
                out[i, c] = math.fsum(R[chosen, c]) / len(chosen)
        if self.n_fallback_:
            log.info("KNN imputation fell back to column means for %d cells", self.n_fallback_)
        return out

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        return self.fit(X).transform(X, self_rows=True)


def knn_impute(table: FeatureTable, k: int = 5) -> FeatureTable:
    imp = KNNImputer(k)
    X = imp.fit_transform(table.X)
    meta = dict(table.meta)
    meta["knn_fallback_cells"] = imp.n_fallback_
    return table.replace(X=X, meta=meta)


# --------------------------------------------------------------------------
# expected-difficulty baseline


def difficulty_band(difficulty: float) -> int:
    """1-2 easy -> Low, 3-4 medium -> Medium, 5-6 hard -> High."""
    if difficulty <= 2:
        return LOW
    if difficulty <= 4:
        return MEDIUM
    return HIGH


@dataclass(frozen=True)
class BaselineResult:
    per_group: dict[int, float]
    per_class: dict[int, float]
    overall: float
    predicted: dict[int, int]


def baseline_difficulty_predictor(tasks: Iterable[FlightTask],
                                  labels: Iterable[tuple[int, int]] | Mapping[int, int]) -> BaselineResult:
    """Accuracy of predicting labels from the banded expected difficulty.

    A task group's difficulty is the mean over its tasks.  ``labels`` are
    ``(task_group, label)`` pairs (several participants may repeat a group)
    or a single participant's ``{task_group: label}`` mapping.
    """
    diffs: dict[int, list[int]] = {}
    for t in tasks:
        diffs.setdefault(t.task_group, []).append(t.expected_difficulty)
    predicted = {g: difficulty_band(float(np.mean(d))) for g, d in diffs.items()}
    pairs = list(labels.items()) if isinstance(labels, Mapping) else list(labels)
    hits: dict[int, list[bool]] = {}
    by_class: dict[int, list[bool]] = {}
    for g, lab in pairs:
        if lab == NO_LABEL:
            continue
        if g not in predicted:
            raise UnknownTaskGroupError(f"label for unknown task group {g}")
        ok = predicted[g] == lab
        hits.setdefault(int(g), []).append(ok)
        by_class.setdefault(int(lab), []).append(ok)
    all_hits = [h for v in hits.values() for h in v]
    return BaselineResult(
        per_group={g: float(np.mean(v)) for g, v in sorted(hits.items())},
        per_class={c: float(np.mean(v)) for c, v in sorted(by_class.items())},
        overall=float(np.mean(all_hits)) if all_hits else float("nan"),
        predicted=dict(sorted(predicted.items())),
    )
