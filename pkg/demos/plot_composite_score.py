"""
Scoring clusterings without labels
==================================

Silhouette, Calinski-Harabasz and Davies-Bouldin are combined into one score
in [0, 1] by averaging an IQR-filtered min-max scaling with a rank scaling.
"""

import numpy as np

from tsidec import evaluation as E
from tsidec.clustering import kmeans

# %%
# The three indices on a hand-sized example
x = np.array([[0.0], [1.0], [10.0], [11.0]])
labels = [0, 0, 1, 1]
print(E.raw_scores(x, labels))

# %%
# Outliers are excluded from the min-max range and then clamped
kept, lo, hi = E.iqr_filter([1, 2, 3, 100])
print("kept", kept, "bounds", lo, hi)
print("minmax CH", E.minmax_norm([1, 2, 3, 100], "ch"))
print("minmax DB", E.minmax_norm([1, 2, 3], "db"), " (lower is better, so reversed)")
print("rank SIL with a tie", E.rank_norm([1, 1, 2], "sil"))

# %%
# A pool of candidates: different k on the same data
rng = np.random.default_rng(0)
data = np.concatenate([rng.normal(c, 0.4, (30, 2)) for c in ([0, 0], [4, 0], [0, 4])])
entries = []
for k in (2, 3, 4, 5):
    lab = kmeans(data, k, seed=0).labels
    entries.append(E.raw_scores(data, lab, f"k={k}"))
pool = E.composite_score(entries)
for row in pool.table():
    print(f"{row['candidate_id']}  SIL {row['sil']:.3f}  CH {row['ch']:8.1f}  DB {row['db']:.3f}  S_eva {row['s_eva']:.3f}")

# %%
# Balance diagnostics for a skewed partition of 3927 items
dom, std, small = E.balance_from_sizes([1562, 488, 466, 440, 353, 313, 305])
print(f"dominant cluster {100 * dom:.1f}%, size std {std:.1f}, small clusters {small}")
print(E.format_mean_se(0.75231, 0.007241))
