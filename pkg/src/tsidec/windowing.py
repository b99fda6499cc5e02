"""Series-to-matrix transform: resampling, min-max scaling and overlapping windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidInputError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    """One univariate signal with an identifier and optional scalar metadata."""

    id: str
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise InvalidInputError(f"series {self.id!r}: values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"series {self.id!r}: values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.id, values, dict(self.metadata))


@dataclass(frozen=True)
class SeriesMatrix:
    """Grayscale matrix built from one series; rows are consecutive windows."""

    data: np.ndarray
    window_size: int
    stride: int
    pad_count: int
    source_id: str = ""

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _check_window(window_size: int, stride: int) -> None:
    if window_size < 1:
        raise InvalidParameterError(f"window_size must be >= 1, got {window_size}")
    if stride < 1 or stride > window_size:
        raise InvalidParameterError(
            f"stride must satisfy 1 <= stride <= window_size ({window_size}), got {stride}"
        )


def resample_linear(series: TimeSeries, target_len: int = 497) -> TimeSeries:
    """Linearly interpolate ``series`` onto ``target_len`` evenly spaced points.

    Endpoints are kept exactly; sample ``i`` of the output sits at position
    ``i * (N - 1) / (target_len - 1)`` of the input.
    """
    n = len(series)
    if n < 2 or target_len < 2:
        raise InvalidInputError(f"resampling needs length >= 2 and target >= 2 (got {n}, {target_len})")
    if n == target_len:
        return series
    positions = np.arange(target_len) * ((n - 1) / (target_len - 1))
    out = np.interp(positions, np.arange(n, dtype=np.float64), series.values)
    out[0] = series.values[0]
    out[-1] = series.values[-1]
    return series.with_values(out)


def normalize_unit(series: TimeSeries) -> TimeSeries:
    """Min-max scale to [0, 1]; a constant series maps to 0.5 everywhere."""
    v = series.values
    lo, hi = v.min(), v.max()
    if hi == lo:
        return series.with_values(np.full_like(v, 0.5))
    out = (v - lo) / (hi - lo)
    # guard against 1 + eps from rounding
    np.clip(out, 0.0, 1.0, out=out)
    return series.with_values(out)


def row_count(n: int, window_size: int, stride: int) -> int:
    _check_window(window_size, stride)
    if n <= window_size:
        return 1
    return math.ceil((n - window_size) / stride) + 1


def required_length(window_size: int, stride: int, rows: int) -> int:
    """Number of samples consumed by ``rows`` windows.

    With ``rows == window_size`` and ``stride = window_size - overlap`` this is
    ``n_s + (n_s - 1)(n_s - n_o)``.
    """
    _check_window(window_size, stride)
    if rows < 1:
        raise InvalidParameterError(f"rows must be >= 1, got {rows}")
    return window_size + (rows - 1) * stride


def window_transform(series: TimeSeries, window_size: int = 32, stride: int = 15) -> SeriesMatrix:
    """Stack overlapping windows of ``series`` as matrix rows.

    The tail is edge-padded (last value repeated) so that every sample is
    covered by at least one window.
    """
    _check_window(window_size, stride)
    values = series.values
    n = values.size
    if n == 0:
        raise InvalidInputError("cannot window an empty series")
    rows = row_count(n, window_size, stride)
    total = required_length(window_size, stride, rows)
    padded = np.concatenate([values, np.full(total - n, values[-1])]) if total > n else values
    windows = np.lib.stride_tricks.sliding_window_view(padded, window_size)[::stride]
    data = np.ascontiguousarray(windows[:rows], dtype=np.float64)
    data.setflags(write=False)
    return SeriesMatrix(data, window_size, stride, total - n, series.id)


def dewindow(matrix: SeriesMatrix) -> np.ndarray:
    """Invert :func:`window_transform`, returning the padded series."""
    d = matrix.data
    tail = [row[-matrix.stride:] for row in d[1:]]
    return np.concatenate([d[0], *tail]) if tail else d[0].copy()


def to_matrix(series: TimeSeries, resample_len: int = 497, window_size: int = 32, stride: int = 15) -> SeriesMatrix:
    """Full preprocessing chain: resample, scale to [0, 1], window."""
    s = resample_linear(series, resample_len) if len(series) != resample_len else series
    return window_transform(normalize_unit(s), window_size, stride)


def matrix_shape(resample_len: int, window_size: int, stride: int) -> tuple[int, int]:
    return row_count(resample_len, window_size, stride), window_size


def stack_matrices(matrices) -> np.ndarray:
    """Batch matrices into an ``(n, 1, rows, cols)`` array for the network."""
    arr = np.stack([m.data for m in matrices]).astype(np.float64)
    return arr[:, None, :, :]
