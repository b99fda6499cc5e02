"""Cluster statistics tables and dependency-free SVG plots."""

from __future__ import annotations

import logging
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd")
METADATA_COLUMNS = ("weight", "energy")


def cluster_stats(series, labels, k: int | None = None, columns=METADATA_COLUMNS) -> list[dict]:
    """Per-cluster cardinality, mean duration and metadata means.

    Duration comes from the ``duration`` metadata field when every series has
    one, otherwise from the native sample count (``duration_unit`` tells which).
    A metadata column missing from any series is left out with a warning.
    When both weight and energy are present, ``energy_per_weight`` is the ratio
    of the cluster means.
    """
    series = list(series)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != len(series):
        raise ValueError(f"{labels.size} labels for {len(series)} series")
    k = int(labels.max()) + 1 if k is None else k
    if all("duration" in s.metadata for s in series):
        duration = np.array([s.metadata["duration"] for s in series], dtype=np.float64)
        unit = "seconds"
    else:
        duration = np.array([len(s) for s in series], dtype=np.float64)
        unit = "samples"
    present = []
    for c in columns:
        if all(c in s.metadata for s in series):
            present.append(c)
        elif any(c in s.metadata for s in series):
            log.warning("metadata column %r missing for some series; omitted", c)
    meta = {c: np.array([s.metadata[c] for s in series], dtype=np.float64) for c in present}
    rows = []
    for j in range(k):
        mask = labels == j
        size = int(mask.sum())
        row = {"cluster": j, "cardinality": size,
               "mean_duration": float(duration[mask].mean()) if size else float("nan"), "duration_unit": unit}
        for c in present:
            row[f"mean_{c}"] = float(meta[c][mask].mean()) if size else float("nan")
        if "weight" in present and "energy" in present and size:
            row["energy_per_weight"] = row["mean_energy"] / row["mean_weight"]
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# SVG


def _fmt(v):
    return f"{v:.2f}"


def _svg(width, height, body, title):
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<title>{escape(title)}</title>\n'
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n')
    return head + "".join(body) + "</svg>\n"


def _axes(x0, y0, w, h, xlabel, ylabel, lo, hi):
    return [
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black" stroke-width="1"/>\n',
        f'<text x="{x0 + w / 2:.1f}" y="{y0 + h + 32}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>\n',
        f'<text x="{x0 - 44}" y="{y0 + h / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 {x0 - 44} {y0 + h / 2:.1f})">{escape(ylabel)}</text>\n',
        f'<text x="{x0 - 4}" y="{y0 + 4}" font-size="10" text-anchor="end">{_fmt(hi)}</text>\n',
        f'<text x="{x0 - 4}" y="{y0 + h}" font-size="10" text-anchor="end">{_fmt(lo)}</text>\n',
    ]


def plot_centers(curves, labels, path, k: int | None = None, title="Cluster centers") -> int:
    """One polyline per non-empty cluster: the mean of its resampled curves.

    Returns the number of polylines drawn.  Output bytes depend only on the inputs.
    """
    curves = np.asarray(curves, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    means = {}
    for j in range(k):
        mask = labels == j
        if mask.any():
            means[j] = curves[mask].mean(axis=0)
        else:
            log.info("cluster %d is empty; no center drawn", j)
    width, height, x0, y0, w, h = 720, 420, 70, 30, 520, 330
    lo = min((m.min() for m in means.values()), default=0.0)
    hi = max((m.max() for m in means.values()), default=1.0)
    span = hi - lo if hi > lo else 1.0
    body = _axes(x0, y0, w, h, "resampled index", "value", lo, hi)
    for rank, (j, m) in enumerate(means.items()):
        xs = x0 + np.arange(m.size) * (w / max(m.size - 1, 1))
        ys = y0 + h - (m - lo) / span * h
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
        color = PALETTE[j % len(PALETTE)]
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>\n')
        ly = y0 + 14 + rank * 16
        body.append(f'<line x1="{x0 + w + 12}" y1="{ly - 4}" x2="{x0 + w + 32}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>\n')
        body.append(f'<text x="{x0 + w + 38}" y="{ly}" font-size="11">cluster {j}</text>\n')
    Path(path).write_text(_svg(width, height, body, title))
    return len(means)


def pca_2d(x) -> np.ndarray:
    """Project onto the top two principal components with a fixed sign convention."""
    x = np.asarray(x, dtype=np.float64)
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:2]
    # make the largest-magnitude loading of each component positive
    signs = np.sign(comps[np.arange(comps.shape[0]), np.abs(comps).argmax(axis=1)])
    signs[signs == 0] = 1.0
    proj = xc @ (comps * signs[:, None]).T
    if proj.shape[1] < 2:
        proj = np.column_stack([proj, np.zeros(len(x))])
    return proj


def plot_scatter(z, labels, path, title="Latent space (PCA)") -> None:
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    p = pca_2d(z)
    width, height, x0, y0, w, h = 560, 460, 60, 30, 400, 380
    mins, maxs = p.min(axis=0), p.max(axis=0)
    spans = np.where(maxs > mins, maxs - mins, 1.0)
    body = _axes(x0, y0, w, h, "PC1", "PC2", mins[1], maxs[1])
    for (a, b), lab in zip(p, labels):
        cx = x0 + (a - mins[0]) / spans[0] * w
        cy = y0 + h - (b - mins[1]) / spans[1] * h
        body.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="2.5" fill="{PALETTE[lab % len(PALETTE)]}"/>\n')
    for rank, j in enumerate(np.unique(labels)):
        ly = y0 + 14 + rank * 16
        body.append(f'<circle cx="{x0 + w + 18}" cy="{ly - 4}" r="4" fill="{PALETTE[j % len(PALETTE)]}"/>\n')
        body.append(f'<text x="{x0 + w + 28}" y="{ly}" font-size="11">cluster {j}</text>\n')
    Path(path).write_text(_svg(width, height, body, title))
