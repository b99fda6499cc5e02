import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsidec.windowing import (
    InvalidInputError,
    InvalidParameterError,
    TimeSeries,
    dewindow,
    matrix_shape,
    normalize_unit,
    required_length,
    resample_linear,
    row_count,
    stack_matrices,
    to_matrix,
    window_transform,
)

# (window, stride) -> matrix shape for 497-point series
TABLE7 = {(32, 15): (32, 32), (32, 10): (48, 32), (32, 20): (25, 32), (32, 32): (16, 32),
          (24, 21): (24, 24), (40, 12): (40, 40)}


def test_table7_shapes():
    s = TimeSeries("a", np.linspace(0.0, 1.0, 497))
    for (ws, stride), shape in TABLE7.items():
        assert matrix_shape(497, ws, stride) == shape
        assert window_transform(s, ws, stride).shape == shape


def test_padding_count():
    # 32 + 31 * 15 = 497, so the default configuration needs no padding
    m = window_transform(TimeSeries("a", np.arange(497.0)), 32, 15)
    assert m.pad_count == 0
    m = window_transform(TimeSeries("a", np.arange(497.0)), 32, 20)
    assert m.pad_count == required_length(32, 20, 25) - 497


def test_windows_hand_example():
    m = window_transform(TimeSeries("a", [1, 2, 3, 4, 5]), 3, 2)
    np.testing.assert_array_equal(m.data, [[1, 2, 3], [3, 4, 5]])
    m = window_transform(TimeSeries("a", [1, 2, 3, 4, 5, 6]), 3, 2)
    # tail is edge padded
    np.testing.assert_array_equal(m.data, [[1, 2, 3], [3, 4, 5], [5, 6, 6]])
    assert m.pad_count == 1


def test_short_series_single_row():
    m = window_transform(TimeSeries("a", [1.0, 2.0]), 4, 2)
    np.testing.assert_array_equal(m.data, [[1, 2, 2, 2]])


def test_required_length_identity_exhaustive():
    for ws in range(2, 65):
        for overlap in range(1, ws):
            assert required_length(ws, ws - overlap, ws) == ws + (ws - 1) * (ws - overlap)


def test_bad_parameters():
    s = TimeSeries("a", np.arange(10.0))
    with pytest.raises(InvalidParameterError):
        window_transform(s, 4, 5)
    with pytest.raises(InvalidParameterError):
        window_transform(s, 0, 1)
    with pytest.raises(InvalidParameterError):
        row_count(10, 4, 0)
    with pytest.raises(InvalidInputError):
        TimeSeries("a", [])
    with pytest.raises(InvalidInputError):
        TimeSeries("a", [1.0, np.nan])


def test_normalize_unit():
    s = normalize_unit(TimeSeries("a", [2.0, 4.0, 3.0]))
    np.testing.assert_allclose(s.values, [0.0, 1.0, 0.5])
    assert np.all(normalize_unit(TimeSeries("c", [7.0] * 5)).values == 0.5)


def test_resample_endpoints_and_linear():
    s = TimeSeries("a", [0.0, 10.0])
    r = resample_linear(s, 11)
    np.testing.assert_allclose(r.values, np.arange(11.0))
    r = resample_linear(TimeSeries("b", np.sin(np.linspace(0, 3, 123))), 497)
    assert len(r) == 497
    assert r.values[0] == np.sin(0.0) and r.values[-1] == np.sin(3.0)


def test_to_matrix_and_stack():
    series = [TimeSeries(str(i), np.random.default_rng(i).random(300 + i)) for i in range(3)]
    mats = [to_matrix(s) for s in series]
    batch = stack_matrices(mats)
    assert batch.shape == (3, 1, 32, 32)
    assert batch.min() >= 0.0 and batch.max() <= 1.0


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 200), ws=st.integers(1, 40), data=st.data())
def test_window_roundtrip(n, ws, data):
    stride = data.draw(st.integers(1, ws))
    values = np.random.default_rng(n * 1000 + ws).standard_normal(n)
    m = window_transform(TimeSeries("x", values), ws, stride)
    assert m.rows == row_count(n, ws, stride)
    assert m.cols == ws
    flat = dewindow(m)
    assert flat.size == required_length(ws, stride, m.rows) >= n
    np.testing.assert_array_equal(flat[:n], values)
    np.testing.assert_array_equal(flat[n:], values[-1])
    # consecutive rows overlap by ws - stride samples
    if m.rows > 1 and stride < ws:
        np.testing.assert_array_equal(m.data[1:, : ws - stride], m.data[:-1, stride:])
