"""
Synthetic melting cycles
========================

Four operating modes that differ in the proportions of heating, holding and
cooling, one of them with an intervention dip during the hold.
"""

import tempfile
from pathlib import Path

import numpy as np

from tsidec.datagen import DEFAULT_PALETTE, gen_dataset, melting_profile
from tsidec.evaluation import silhouette
from tsidec.report import cluster_stats, plot_centers
from tsidec.windowing import normalize_unit, resample_linear

for p in DEFAULT_PALETTE:
    print(f"{p.name:17s} ramp {p.ramp_len:5.1f} steps, hold {p.hold_len:5.1f} steps, dip {p.dip}")

# %%
# Noise-free profiles on the nominal time grid
t = np.arange(400.0)
for p in DEFAULT_PALETTE:
    v = melting_profile(p, t)
    print(f"{p.name:17s} max {v.max():7.1f}  final {v[-1]:6.1f}")

# %%
# A labelled dataset.  Labels are generator indices; the series are shuffled.
series, labels = gen_dataset(n_per_mode=25, seed=0)
print(len(series), "series, lengths", min(map(len, series)), "-", max(map(len, series)))
print("label histogram", np.bincount(labels))

curves = np.stack([normalize_unit(resample_linear(s, 497)).values for s in series])
print("silhouette of the true labels on scaled curves %.3f" % silhouette(curves, labels))

# %%
# Per-mode statistics and the mean curve of every mode as SVG
for row in cluster_stats(series, labels):
    print(row)
out = Path(tempfile.mkdtemp()) / "modes.svg"
print(plot_centers(curves, labels, out, title="Mode means"), "polylines written to", out)
