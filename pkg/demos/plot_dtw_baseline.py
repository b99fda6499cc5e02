"""
DTW k-medoids baseline
======================

Dynamic time warping aligns curves that differ in pace, so a k-medoids
clustering on DTW distances is a natural shape-based reference point.
"""

import numpy as np

from tsidec.baselines import dtw_distance, dtw_matrix, kmedoids_dtw
from tsidec.datagen import gen_dataset
from tsidec.evaluation import adjusted_rand_index
from tsidec.windowing import normalize_unit, resample_linear

# %%
# Warping absorbs a repeated sample, and a shifted bump costs less than under
# the pointwise L1 distance.
print(dtw_distance([0, 0, 1], [0, 1]))
a = np.exp(-0.5 * ((np.arange(40) - 15) / 3.0) ** 2)
b = np.exp(-0.5 * ((np.arange(40) - 20) / 3.0) ** 2)
print("DTW %.3f  vs  L1 %.3f" % (dtw_distance(a, b).distance, np.abs(a - b).sum()))

# %%
# k-medoids on 40 synthetic curves, downsampled to keep the distance matrix cheap
series, truth = gen_dataset(n_per_mode=10, seed=2)
curves = [normalize_unit(resample_linear(s, 120)).values for s in series]
dist = dtw_matrix(curves)
res = kmedoids_dtw(curves, 4, seed=0, dist=dist)
print("medoids", res.provenance["medoids"], "cost %.2f" % res.provenance["cost"], "swaps", res.provenance["swaps"])
print("sizes", res.sizes, "ARI vs generator labels %.3f" % adjusted_rand_index(res.labels, truth))
