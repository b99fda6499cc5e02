from dataclasses import replace

import numpy as np
import pytest

from tsidec.datagen import (
    DEFAULT_PALETTE,
    InvalidParameterError,
    ModeParams,
    gen_dataset,
    gen_melting_curve,
    melting_profile,
    write_dataset,
)
from tsidec.evaluation import silhouette
from tsidec.io import ingest_csv
from tsidec.windowing import normalize_unit, resample_linear

QUIET = tuple(replace(m, noise_sigma=0.0) for m in DEFAULT_PALETTE)


def test_curve_deterministic():
    for params in DEFAULT_PALETTE:
        a, na = gen_melting_curve(params, 42)
        b, nb = gen_melting_curve(params, 42)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.metadata == b.metadata and na == nb == params.name
    c, _ = gen_melting_curve(DEFAULT_PALETTE[0], 43)
    assert c.values.size != a.values.size or not np.array_equal(c.values, a.values)


@pytest.mark.parametrize("params", QUIET, ids=lambda p: p.name)
def test_noise_free_construction(params):
    s, _ = gen_melting_curve(params, 5)
    ramp = s.values[: int(params.ramp_len * s.values.size / params.base_len)]
    assert np.all(np.diff(ramp) >= 0)
    if params.dip is None:
        assert s.values.max() == pytest.approx(params.peak_temp, abs=1e-9)
    else:
        assert s.values.max() <= params.peak_temp + 1e-9
    assert abs(s.values.size - params.base_len) <= params.length_jitter * params.base_len + 1


def test_profile_stages():
    p = ModeParams(100.0, 10.0, 200.0, 0.2, 5.0, base_len=100)
    v = melting_profile(p, [0.0, 5.0, 10.0, 20.0, 30.0, 1e6])
    # ramp ends at t=10, plateau lasts 20 steps, cooling decays back to the start
    np.testing.assert_allclose(v[:5], [100, 150, 200, 200, 200])
    assert v[-1] == pytest.approx(100.0)
    # the dip lowers the plateau by its depth at the centre
    d = replace(p, dip=(0.5, 30.0, 2.0))
    assert melting_profile(d, [20.0])[0] == pytest.approx(170.0)


def test_mode_params_validation():
    with pytest.raises(InvalidParameterError):
        ModeParams(500.0, 1.0, 400.0, 0.1, 1.0)
    with pytest.raises(InvalidParameterError):
        ModeParams(0.0, 1.0, 10.0, 1.5, 1.0)
    with pytest.raises(InvalidParameterError):
        ModeParams(0.0, 1.0, 10.0, 0.1, 1.0, noise_sigma=-1.0)
    with pytest.raises(InvalidParameterError):
        ModeParams(0.0, 1.0, 1000.0, 0.1, 1.0, base_len=100)


def test_dataset_histogram_and_determinism():
    s, y = gen_dataset(DEFAULT_PALETTE, 7, seed=3)
    np.testing.assert_array_equal(np.bincount(y), [7, 7, 7, 7])
    assert len({t.id for t in s}) == 28
    s2, y2 = gen_dataset(DEFAULT_PALETTE, 7, seed=3)
    np.testing.assert_array_equal(y, y2)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(s, s2))
    with pytest.raises(InvalidParameterError):
        gen_dataset(DEFAULT_PALETTE, 0)
    with pytest.raises(InvalidParameterError):
        gen_dataset(DEFAULT_PALETTE[:1], 5)


def _resampled(series, unit=False):
    out = [resample_linear(s, 497) for s in series]
    if unit:
        out = [normalize_unit(s) for s in out]
    return np.stack([s.values for s in out])


def test_true_labels_are_separable():
    s, y = gen_dataset(QUIET, 50, seed=0)
    assert silhouette(_resampled(s), y) > 0.3
    # regression pin for the default noisy palette on unit-scaled curves
    s, y = gen_dataset(DEFAULT_PALETTE, 50, seed=0)
    assert silhouette(_resampled(s, unit=True), y) == pytest.approx(0.97856, abs=1e-4)


def test_write_dataset_round_trip(tmp_path):
    s, _ = gen_dataset(DEFAULT_PALETTE, 2, seed=1)
    write_dataset(s, tmp_path / "d.csv", tmp_path / "m.csv")
    back = ingest_csv(tmp_path / "d.csv", tmp_path / "m.csv")
    assert [t.id for t in back] == [t.id for t in s]
    for a, b in zip(s, back):
        np.testing.assert_array_equal(a.values, b.values)
        assert a.metadata == pytest.approx(b.metadata)
