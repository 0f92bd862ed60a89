"""Brute-force reference implementations used to cross-check the fast paths.

Each oracle is written as plain loops over the definition and refuses
instances above 10^3 rows or samples.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InstanceTooLargeError

MAX_SIZE = 1000


def _check(n: int, what: str) -> None:
    if n > MAX_SIZE:
        raise InstanceTooLargeError(f"oracle limited to {MAX_SIZE} {what}, got {n}")


def oracle_knn(X, k: int) -> np.ndarray:
    """Impute every missing cell from the mean of its k nearest rows.

    All pairwise distances are recomputed per cell: over the columns both rows
    observe, ``sqrt(width / n_common * sum of squared differences)``.  Rows
    that miss the target column, share no column, or are the row itself are
    skipped; ties go to the lower row index; a cell without candidates takes
    the column mean.
    """
    X = np.asarray(X, dtype=np.float64)
    n, width = X.shape
    _check(n, "rows")
    out = X.copy()
    for i in range(n):
        for c in range(width):
            if not math.isnan(X[i, c]):
                continue
            cands = []
            for j in range(n):
                if j == i or math.isnan(X[j, c]):
                    continue
                d2 = 0.0
                common = 0
                for col in range(width):
                    a, b = X[i, col], X[j, col]
                    if math.isnan(a) or math.isnan(b):
                        continue
                    diff = b - a
                    d2 = d2 + diff * diff
                    common += 1
                if common == 0:
                    continue
                cands.append((math.sqrt(width / common * d2), j))
            if not cands:
                vals = [X[r, c] for r in range(n) if not math.isnan(X[r, c])]
                out[i, c] = math.fsum(vals) / len(vals)
                continue
            cands.sort()
            chosen = sorted(j for _, j in cands[:k])
            out[i, c] = math.fsum(X[j, c] for j in chosen) / len(chosen)
    return out


def oracle_saccades(t, xy, threshold: float, min_fixation_s: float = 0.0):
    """Saccade onsets, distances and fixation spans by walking the samples.

    Returns ``(saccade_times, saccade_distances, fixations)`` as tuples.
    """
    t = [float(v) for v in t]
    pts = [(float(a), float(b)) for a, b in np.asarray(xy, dtype=np.float64)[:, :2]]
    n = len(t)
    _check(n, "samples")
    fast = []
    for k in range(n - 1):
        dx = pts[k + 1][0] - pts[k][0]
        dy = pts[k + 1][1] - pts[k][1]
        fast.append(math.sqrt(dx * dx + dy * dy) / (t[k + 1] - t[k]) > threshold)
    times, dists, fixations = [], [], []
    k = 0
    while k < len(fast):
        start = k
        while k + 1 < len(fast) and fast[k + 1] == fast[start]:
            k += 1
        first, last = start, k + 1          # sample before the run, last sample of it
        if fast[start]:
            dx = pts[last][0] - pts[first][0]
            dy = pts[last][1] - pts[first][1]
            times.append(t[first])
            dists.append(math.sqrt(dx * dx + dy * dy))
        elif t[last] - t[first] >= min_fixation_s:
            fixations.append((t[first], t[last]))
        k += 1
    return tuple(times), tuple(dists), tuple(fixations)


def oracle_disk(center=(0.0, 0.0), width: int | None = None, height: int | None = None,
                radius_sq: int = 38) -> list[tuple[int, int]]:
    """Lattice points within the disk, scanning rows top to bottom.

    Without a frame the result is offsets around the origin; with a frame it
    is the in-frame pixel coordinates around ``center`` rounded half up.
    """
    cx = math.floor(center[0] + 0.5)
    cy = math.floor(center[1] + 0.5)
    if width is None or height is None:
        r = math.isqrt(radius_sq)
        return [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
                if dx * dx + dy * dy <= radius_sq]
    _check(width * height, "pixels")
    return [(x, y) for y in range(height) for x in range(width)
            if (x - cx) ** 2 + (y - cy) ** 2 <= radius_sq]


def oracle_semantic_distribution(pixels, priorities) -> list[float]:
    """Per-group weighted share with weight ``exp(priority / 3) - 1`` per pixel."""
    weights = [math.expm1(p / 3.0) for p in priorities]
    totals = [0.0] * len(priorities)
    for g in pixels:
        totals[int(g)] += weights[int(g)]
    s = math.fsum(totals)
    return [v / s for v in totals]
