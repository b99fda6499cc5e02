"""Internal validity indices and the composite score used for model selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

METRICS = ("sil", "ch", "db")
HIGHER_IS_BETTER = {"sil": True, "ch": True, "db": False}


class InvalidParameterError(ValueError):
    pass


def _encode_labels(labels):
    uniq, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.ravel(), uniq.size


def _check_k(k, n, upper=True):
    if k < 2 or (upper and k > n - 1):
        raise InvalidParameterError(f"need 2 <= k <= n-1 distinct labels (k={k}, n={n})")


def silhouette(x, labels) -> float:
    """Mean silhouette width; members of singleton clusters score 0."""
    x = np.asarray(x, dtype=np.float64).reshape(len(labels), -1)
    lab, k = _encode_labels(labels)
    n = lab.size
    _check_k(k, n)
    d = cdist(x, x)
    onehot = np.eye(k)[lab]
    sums = d @ onehot  # n x k: total distance from i to each cluster
    sizes = onehot.sum(0)
    own = sizes[lab]
    a = np.where(own > 1, sums[np.arange(n), lab] / np.maximum(own - 1, 1), 0.0)
    other = sums / sizes
    other[np.arange(n), lab] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def _centroids(x, lab, k):
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, lab, x)
    return sums / np.bincount(lab, minlength=k)[:, None]


def calinski_harabasz(x, labels) -> float:
    """Between/within dispersion ratio; ``inf`` when the within-cluster dispersion is zero."""
    x = np.asarray(x, dtype=np.float64).reshape(len(labels), -1)
    lab, k = _encode_labels(labels)
    n = lab.size
    _check_k(k, n)
    cent = _centroids(x, lab, k)
    overall = x.mean(axis=0)
    between = float((np.bincount(lab, minlength=k) * ((cent - overall) ** 2).sum(1)).sum())
    within = float(((x - cent[lab]) ** 2).sum())
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def davies_bouldin(x, labels) -> float:
    """Average worst-case similarity ratio; ``inf`` when two centroids coincide."""
    x = np.asarray(x, dtype=np.float64).reshape(len(labels), -1)
    lab, k = _encode_labels(labels)
    _check_k(k, lab.size, upper=False)
    cent = _centroids(x, lab, k)
    spread = np.bincount(lab, weights=np.sqrt(((x - cent[lab]) ** 2).sum(1)), minlength=k) / np.bincount(lab, minlength=k)
    sep = cdist(cent, cent)
    np.fill_diagonal(sep, np.inf)
    if np.any(sep == 0.0):
        return math.inf
    ratio = (spread[:, None] + spread[None, :]) / sep
    return float(ratio.max(axis=1).mean())


@dataclass
class RawScores:
    sil: float
    ch: float
    db: float
    candidate_id: str = ""

    @property
    def degenerate(self) -> dict:
        return {m: not math.isfinite(getattr(self, m)) for m in METRICS}

    def to_dict(self):
        return {"sil": self.sil, "ch": self.ch, "db": self.db}


def raw_scores(x, labels, candidate_id="") -> RawScores:
    return RawScores(silhouette(x, labels), calinski_harabasz(x, labels), davies_bouldin(x, labels), candidate_id)


# ---------------------------------------------------------------------------
# normalization


def _iqr_bounds(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size < 4:
        return -math.inf, math.inf
    q1, q3 = np.percentile(v, [25, 75])  # linear interpolation at (n-1)q
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr


def iqr_filter(values):
    """Drop values outside ``[Q1 - 1.5 IQR, Q3 + 1.5 IQR]``; pools under 4 pass through.

    Returns ``(kept, lower, upper)``.
    """
    v = np.asarray(values, dtype=np.float64)
    lo, hi = _iqr_bounds(v)
    return v[(v >= lo) & (v <= hi)], lo, hi


def minmax_norm(values, metric: str) -> np.ndarray:
    """Min-max scale against the IQR-filtered pool; values outside it are clamped.

    Orientation is flipped for DB so that 1 is always best.  A pool whose
    filtered range is zero maps its surviving members to 0.5.
    """
    v = np.asarray(values, dtype=np.float64)
    kept, _, _ = iqr_filter(v)
    lo, hi = kept.min(), kept.max()
    if hi > lo:
        s = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    else:
        s = np.where(v > hi, 1.0, np.where(v < lo, 0.0, 0.5))
    return s if HIGHER_IS_BETTER[metric] else 1.0 - s


def rank_norm(values, metric: str) -> np.ndarray:
    """``(rank - 1) / (N - 1)`` with average ranks for ties.

    Ranks ascend for SIL/CH and descend for DB.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 1:
        return np.ones(1)
    r = rankdata(v if HIGHER_IS_BETTER[metric] else -v, method="average")
    return (r - 1.0) / (v.size - 1.0)


@dataclass
class CandidatePool:
    entries: list
    minmax: dict = field(default_factory=dict)
    rank: dict = field(default_factory=dict)
    norm: dict = field(default_factory=dict)
    s_eva: np.ndarray = None

    def table(self):
        rows = []
        for i, e in enumerate(self.entries):
            row = {"candidate_id": e.candidate_id, **e.to_dict()}
            for m in METRICS:
                row[f"minmax_{m}"] = float(self.minmax[m][i])
                row[f"rank_{m}"] = float(self.rank[m][i])
                row[f"norm_{m}"] = float(self.norm[m][i])
            row["s_eva"] = float(self.s_eva[i])
            rows.append(row)
        return rows


def composite_score(entries) -> CandidatePool:
    """Per-metric ``(minmax + rank) / 2`` averaged over SIL, CH and DB.

    Non-finite raw values score 0 on that metric and are left out of the
    population the other candidates are normalized against.
    """
    entries = list(entries)
    if not entries:
        raise InvalidParameterError("empty candidate pool")
    pool = CandidatePool(entries)
    for m in METRICS:
        vals = np.array([getattr(e, m) for e in entries], dtype=np.float64)
        ok = np.isfinite(vals)
        mm = np.zeros(vals.size)
        rk = np.zeros(vals.size)
        if ok.any():
            mm[ok] = minmax_norm(vals[ok], m)
            rk[ok] = rank_norm(vals[ok], m)
        pool.minmax[m], pool.rank[m] = mm, rk
        pool.norm[m] = (mm + rk) / 2.0
    pool.s_eva = sum(pool.norm[m] for m in METRICS) / 3.0
    return pool


# ---------------------------------------------------------------------------
# diagnostics


def balance_diagnostics(labels, k: int | None = None, small_frac: float = 0.01):
    """``(dominant_ratio, size_std, n_small)`` over the ``k`` declared clusters.

    ``size_std`` is the population standard deviation of cluster sizes and
    ``n_small`` counts clusters holding less than ``small_frac`` of the samples.
    """
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    sizes = np.bincount(labels, minlength=k)
    n = labels.size
    return float(sizes.max() / n), float(sizes.std()), int(np.sum(sizes < small_frac * n))


def balance_from_sizes(sizes, small_frac: float = 0.01):
    sizes = np.asarray(sizes, dtype=np.float64)
    n = sizes.sum()
    return float(sizes.max() / n), float(sizes.std()), int(np.sum(sizes < small_frac * n))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def adjusted_rand_index(labels_a, labels_b) -> float:
    a, _ = _encode_labels(labels_a)
    b, _ = _encode_labels(labels_b)
    if a.size != b.size:
        raise InvalidParameterError("labelings differ in length")
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(1)).sum()
    sum_b = _comb2(table.sum(0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def standard_error(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


def format_mean_se(mean: float, se: float) -> str:
    """``"0.7523 ± 0.00724"``: mean to 4 decimals, standard error to 5."""
    return f"{round(float(mean), 4)} ± {round(float(se), 5)}"
