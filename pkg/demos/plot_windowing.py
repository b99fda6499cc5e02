"""
From a variable-length series to a grayscale matrix
====================================================

Every series is resampled to a fixed length, min-max scaled and cut into
overlapping windows that are stacked as the rows of a matrix.
"""

import numpy as np

from tsidec.datagen import DEFAULT_PALETTE, gen_melting_curve
from tsidec.windowing import (
    dewindow,
    matrix_shape,
    normalize_unit,
    resample_linear,
    to_matrix,
    window_transform,
)

# %%
# A single synthetic curve of roughly 400 samples
series, mode = gen_melting_curve(DEFAULT_PALETTE[2], seed=7, series_id="demo")
print(mode, len(series), "samples, range", series.values.min().round(1), "..", series.values.max().round(1))

# %%
# Resample to 497 points and scale into [0, 1]
unit = normalize_unit(resample_linear(series, 497))
print("after resampling:", len(unit), "points in [%.1f, %.1f]" % (unit.values.min(), unit.values.max()))

# %%
# Window 32, stride 15 gives exactly 32 rows with no padding (32 + 31*15 = 497)
m = window_transform(unit, 32, 15)
print("matrix", m.shape, "pad_count", m.pad_count)

# consecutive rows share window - stride = 17 samples
assert np.array_equal(m.data[1, :17], m.data[0, 15:])

# %%
# Other window/stride pairs and the shapes they produce
for ws, stride in [(32, 10), (32, 20), (32, 32), (24, 21), (40, 12)]:
    print(f"window {ws:2d} stride {stride:2d} -> {matrix_shape(497, ws, stride)}")

# %%
# When the windows overrun the series the tail is padded with the last value;
# undoing the windowing recovers the series followed by that padding.
m = window_transform(unit, 32, 20)
flat = dewindow(m)
print("25 x 32 needs", flat.size, "samples;", m.pad_count, "padded")
assert np.array_equal(flat[:497], unit.values)

# %%
# ``to_matrix`` does all three steps at once
print(to_matrix(series).data.shape)
