"""CART random forest and softmax gradient boosting on presorted columns.

Both learners grow trees level by level.  Each level is one pass over every
presorted column: running left-side sums are accumulated per active node and
split candidates are scored wherever the value strictly increases.  A split
sends ``x <= threshold`` left, with the threshold set to the largest left
value, so trees depend on the column order only and are unchanged by any
strictly increasing transform of a feature.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def _gbt_level(V, order, node_of, g, h, lo, n_active, lam, min_child_weight):
    d, n = V.shape
    G = np.zeros(n_active)
    H = np.zeros(n_active)
    for i in range(n):
        m = node_of[i] - lo
        if 0 <= m < n_active:
            G[m] += g[i]
            H[m] += h[i]
    parent = G * G / (H + lam)
    best_gain = np.zeros(n_active)
    best_feat = np.full(n_active, -1, np.int64)
    best_thr = np.zeros(n_active)
    GL = np.zeros(n_active)
    HL = np.zeros(n_active)
    last = np.zeros(n_active)
    seen = np.zeros(n_active, np.bool_)
    for j in range(d):
        GL[:] = 0.0
        HL[:] = 0.0
        seen[:] = False
        for r in range(n):
            i = order[j, r]
            m = node_of[i] - lo
            if m < 0 or m >= n_active:
                continue
            x = V[j, r]
            if seen[m] and x > last[m]:
                hl = HL[m]
                hr = H[m] - hl
                if hl >= min_child_weight and hr >= min_child_weight:
                    gl = GL[m]
                    gr = G[m] - gl
                    gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[m]
                    if gain > best_gain[m] + 1e-12 * (abs(parent[m]) + 1e-300):
                        best_gain[m] = gain
                        best_feat[m] = j
                        best_thr[m] = last[m]
            GL[m] += g[i]
            HL[m] += h[i]
            last[m] = x
            seen[m] = True
    return best_feat, best_thr, G, H


@njit(cache=True, nogil=True)
def _gini_level(V, order, node_of, y, w, n_classes, lo, n_active, feat_mask):
    d, n = V.shape
    tot = np.zeros((n_active, n_classes))
    for i in range(n):
        m = node_of[i] - lo
        if 0 <= m < n_active:
            tot[m, y[i]] += w[i]
    W = tot.sum(axis=1)
    parent = np.zeros(n_active)
    for m in range(n_active):
        s = 0.0
        for c in range(n_classes):
            s += tot[m, c] * tot[m, c]
        parent[m] = s / W[m] if W[m] > 0 else 0.0
    best_gain = np.zeros(n_active)
    best_feat = np.full(n_active, -1, np.int64)
    best_thr = np.zeros(n_active)
    L = np.zeros((n_active, n_classes))
    WL = np.zeros(n_active)
    last = np.zeros(n_active)
    seen = np.zeros(n_active, np.bool_)
    for j in range(d):
        L[:, :] = 0.0
        WL[:] = 0.0
        seen[:] = False
        for r in range(n):
            i = order[j, r]
            m = node_of[i] - lo
            if m < 0 or m >= n_active or not feat_mask[m, j]:
                continue
            x = V[j, r]
            if seen[m] and x > last[m]:
                wl = WL[m]
                wr = W[m] - wl
                if wl > 0 and wr > 0:
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        lc = L[m, c]
                        rc = tot[m, c] - lc
                        sl += lc * lc
                        sr += rc * rc
                    gain = sl / wl + sr / wr - parent[m]
                    if gain > best_gain[m] + 1e-12 * W[m]:
                        best_gain[m] = gain
                        best_feat[m] = j
                        best_thr[m] = last[m]
            L[m, y[i]] += w[i]
            WL[m] += w[i]
            last[m] = x
            seen[m] = True
    return best_feat, best_thr, tot


@njit(cache=True, nogil=True)
def _route(X, node_of, lo, n_active, feat, thr, left_id):
    for i in range(X.shape[0]):
        m = node_of[i] - lo
        if 0 <= m < n_active:
            f = feat[m]
            if f < 0:
                node_of[i] = -1
            elif X[i, f] <= thr[m]:
                node_of[i] = left_id[m]
            else:
                node_of[i] = left_id[m] + 1


@njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            k = left[k] if X[i, feature[k]] <= threshold[k] else left[k] + 1
        out[i] = k
    return out


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row order per column (stable) and the column values in that order,
    both shaped ``(d, n)``."""
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    return order, np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))


class Tree:
    """Flat binary tree; children of node k sit at ``left[k]`` and ``left[k] + 1``."""

    def __init__(self, feature, threshold, left, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)

    def leaves(self, X: np.ndarray) -> np.ndarray:
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["value"])


def _grow(X, order, node_of, max_depth, find, leaf_value):
    """Shared level-wise driver.  ``find(lo, n_active)`` returns per-node
    ``(feature, threshold, stats)``; ``leaf_value(stats_row)`` builds a leaf."""
    feature, threshold, left, value = [LEAF], [0.0], [LEAF], [None]
    lo, n_active, depth = 0, 1, 0
    while n_active:
        feat, thr, stats = find(lo, n_active)
        if depth >= max_depth:
            feat = np.full(n_active, -1, np.int64)
        next_lo = len(feature)
        left_id = np.full(n_active, -1, np.int64)
        for m in range(n_active):
            k = lo + m
            value[k] = leaf_value(stats[m])
            if feat[m] >= 0:
                left_id[m] = len(feature)
                feature[k], threshold[k], left[k] = int(feat[m]), float(thr[m]), len(feature)
                feature += [LEAF, LEAF]
                threshold += [0.0, 0.0]
                left += [LEAF, LEAF]
                value += [None, None]
        _route(X, node_of, lo, n_active, feat, thr, left_id)
        lo, n_active = next_lo, len(feature) - next_lo
        depth += 1
    return Tree(feature, threshold, left, np.array(value, dtype=np.float64))


# --------------------------------------------------------------------------
# gradient boosting


def _softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def softmax_deviance(F: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-(w * logp[np.arange(len(y)), y]).sum() / w.sum())


@njit(cache=True, nogil=True)
def _gbt_tree(X, V, order, g, h, max_depth, lam, min_child_weight, eta):
    n = X.shape[0]
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    node_of = np.zeros(n, np.int64)
    lo, n_active, n_nodes, depth = 0, 1, 1, 0
    while n_active > 0:
        if depth < max_depth:
            feat, thr, G, H = _gbt_level(V, order, node_of, g, h, lo, n_active, lam,
                                         min_child_weight)
        else:
            feat = np.full(n_active, -1, np.int64)
            thr = np.zeros(n_active)
            G = np.zeros(n_active)
            H = np.zeros(n_active)
            for i in range(n):
                m = node_of[i] - lo
                if 0 <= m < n_active:
                    G[m] += g[i]
                    H[m] += h[i]
        left_id = np.full(n_active, -1, np.int64)
        next_lo = n_nodes
        for m in range(n_active):
            k = lo + m
            value[k] = -eta * G[m] / (H[m] + lam)
            if feat[m] >= 0:
                feature[k] = feat[m]
                threshold[k] = thr[m]
                left[k] = n_nodes
                left_id[m] = n_nodes
                n_nodes += 2
        _route(X, node_of, lo, n_active, feat, thr, left_id)
        lo, n_active = next_lo, n_nodes - next_lo
        depth += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], value[:n_nodes]


def fit_gbt(X, y, w, n_classes, n_trees=200, max_depth=4, learning_rate=0.1,
            reg_lambda=1.0, min_child_weight=1.0, record_loss=False):
    """Multiclass softmax boosting with second-order leaf values.

    Per round one regression tree per class is fitted to the weighted
    gradients ``w (p - y)`` with hessians ``w 2p(1-p)``; leaves hold
    ``-learning_rate * G / (H + reg_lambda)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = X.shape[0]
    order, V = presort(X)
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    F = np.zeros((n, n_classes))
    rounds = []
    losses = [softmax_deviance(F, y, w)] if record_loss else None
    for _ in range(n_trees):
        P = _softmax(F)
        trees = []
        for c in range(n_classes):
            g = w * (P[:, c] - Y[:, c])
            h = w * np.maximum(2.0 * P[:, c] * (1.0 - P[:, c]), 1e-16)
            tree = Tree(*_gbt_tree(X, V, order, g, h, max_depth, reg_lambda, min_child_weight,
                                   learning_rate))
            F[:, c] += tree.value[tree.leaves(X)]
            trees.append(tree)
        rounds.append(trees)
        if record_loss:
            losses.append(softmax_deviance(F, y, w))
    return rounds, losses


def gbt_scores(rounds, X, n_classes) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    F = np.zeros((X.shape[0], n_classes))
    for trees in rounds:
        for c, tree in enumerate(trees):
            F[:, c] += tree.value[tree.leaves(X)]
    return F


# --------------------------------------------------------------------------
# random forest


def fit_forest(X, y, w, n_classes, seed, n_trees=100, max_depth=32, max_features="sqrt",
               bootstrap=True):
    """Bagged gini CART trees; tree ``t`` draws from ``default_rng([seed, t])``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    order, V = presort(X)
    m_feat = max(1, int(np.sqrt(d))) if max_features == "sqrt" else min(d, int(max_features))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        counts = (np.bincount(rng.integers(0, n, n), minlength=n) if bootstrap
                  else np.ones(n, np.int64))
        wt = w * counts
        node_of = np.where(wt > 0, 0, -1).astype(np.int64)

        def find(lo, n_active, wt=wt, node_of=node_of, rng=rng):
            mask = np.zeros((n_active, d), dtype=np.bool_)
            for m in range(n_active):
                mask[m, rng.permutation(d)[:m_feat]] = True
            return _gini_level(V, order, node_of, y, wt, n_classes, lo, n_active, mask)

        def leaf(counts_row):
            # first maximal class wins ties, i.e. Low < Medium < High
            return float(np.argmax(counts_row))

        trees.append(_grow(X, order, node_of, max_depth, find, leaf))
    return trees


def forest_votes(trees, X, n_classes) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    V = np.zeros((X.shape[0], n_classes))
    rows = np.arange(X.shape[0])
    for tree in trees:
        V[rows, tree.value[tree.leaves(X)].astype(np.int64)] += 1.0
    return V
