"""Classical baseline: DTW distance and k-medoids on the DTW distance matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .clustering import ClusteringResult, InvalidParameterError


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path_length: int


@numba.njit(cache=True)
def _dtw_table(a, b):
    n, m = a.size, b.size
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = abs(a[i - 1] - b[j - 1]) + best
    return acc


@numba.njit(cache=True)
def _path_length(acc):
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    steps = 1
    while i > 1 or j > 1:
        diag = acc[i - 1, j - 1]
        up = acc[i - 1, j]
        left = acc[i, j - 1]
        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
        steps += 1
    return steps


def dtw_distance(a, b) -> DtwResult:
    """Unconstrained DTW with ``|a_i - b_j|`` local cost and steps (1,0), (0,1), (1,1)."""
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidParameterError("DTW needs non-empty sequences")
    acc = _dtw_table(a, b)
    return DtwResult(float(acc[-1, -1]), int(_path_length(acc)))


@numba.njit(cache=True)
def _dtw_value(a, b, row_prev, row):
    m = b.size
    row_prev[0] = 0.0
    for j in range(1, m + 1):
        row_prev[j] = np.inf
    for i in range(1, a.size + 1):
        row[0] = np.inf
        for j in range(1, m + 1):
            best = row_prev[j - 1]
            if row_prev[j] < best:
                best = row_prev[j]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = abs(a[i - 1] - b[j - 1]) + best
        for j in range(m + 1):
            row_prev[j] = row[j]
    return row_prev[m]


@numba.njit(cache=True)
def _dtw_matrix(data, lengths):
    n = lengths.size
    out = np.zeros((n, n))
    width = data.shape[1] + 1
    row_prev = np.empty(width)
    row = np.empty(width)
    for i in range(n):
        for j in range(i + 1, n):
            d = _dtw_value(data[i, :lengths[i]], data[j, :lengths[j]], row_prev, row)
            out[i, j] = d
            out[j, i] = d
    return out


def dtw_matrix(series_set) -> np.ndarray:
    """Symmetric pairwise DTW distances with a zero diagonal."""
    seqs = [np.asarray(getattr(s, "values", s), dtype=np.float64).ravel() for s in series_set]
    if any(s.size == 0 for s in seqs):
        raise InvalidParameterError("DTW needs non-empty sequences")
    lengths = np.array([s.size for s in seqs], dtype=np.int64)
    data = np.zeros((len(seqs), int(lengths.max()) if seqs else 0))
    for i, s in enumerate(seqs):
        data[i, :s.size] = s
    return _dtw_matrix(data, lengths)


def _pam(dist, k, medoids, max_swaps):
    n = dist.shape[0]
    medoids = list(medoids)
    cost = dist[:, medoids].min(axis=1).sum()
    swaps = 0
    while swaps < max_swaps:
        best = (cost, None, None)
        in_set = set(medoids)
        for mi in range(k):
            for h in range(n):
                if h in in_set:
                    continue
                trial = medoids.copy()
                trial[mi] = h
                c = dist[:, trial].min(axis=1).sum()
                if c < best[0] - 1e-12:
                    best = (c, mi, h)
        if best[1] is None:
            break
        cost, mi, h = best
        medoids[mi] = h
        swaps += 1
    return medoids, float(cost), swaps


def kmedoids_dtw(series_set, k: int, seed: int = 0, max_swaps: int = 100, dist=None) -> ClusteringResult:
    """PAM k-medoids over the DTW distance matrix.

    Initial medoids are drawn without replacement from a generator seeded with
    ``seed``; each iteration applies the single best improving swap.  Medoid
    indices and the final cost are recorded in ``provenance``.
    """
    n = len(series_set) if dist is None else dist.shape[0]
    if k < 1 or n < k:
        raise InvalidParameterError(f"k-medoids needs 1 <= k <= n (k={k}, n={n})")
    dist = dtw_matrix(series_set) if dist is None else np.asarray(dist, dtype=np.float64)
    rng = np.random.default_rng(seed)
    init = sorted(rng.choice(n, size=k, replace=False).tolist())
    medoids, cost, swaps = _pam(dist, k, init, max_swaps)
    labels = dist[:, medoids].argmin(axis=1)
    # a medoid always belongs to its own cluster, even with duplicate series
    labels[medoids] = np.arange(k)
    return ClusteringResult(labels, k, "kmedoids_dtw", np.asarray(medoids, dtype=np.float64)[:, None], seed,
                            {"medoids": [int(m) for m in medoids], "cost": cost, "swaps": swaps})
