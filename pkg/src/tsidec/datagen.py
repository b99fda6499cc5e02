"""Synthetic melting-cycle curves with known mode labels.

Each curve has three stages: a linear heating ramp, a plateau at the peak
temperature (optionally with a Gaussian-shaped dip), and an exponential
cool-down.  Randomness comes from numpy's ``PCG64`` bit generator, so a
``(params, seed)`` pair always produces the same floats.

Because the pipeline min-max scales every series, the modes in
:data:`DEFAULT_PALETTE` differ in the *proportions* of the three stages and in
the presence of a dip, not merely in temperature level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .windowing import TimeSeries

SAMPLE_SECONDS = 10.0


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ModeParams:
    """Shape parameters for one operating mode.

    Temperatures are in degrees C, rates in degrees C per step.  ``dip`` is
    ``None`` or ``(position, depth, width)`` with ``position`` a fraction of
    the plateau and ``width`` in steps.  ``base_len`` is the nominal number of
    steps before length jitter.
    """

    start_temp: float
    ramp_rate: float
    peak_temp: float
    hold_len_frac: float
    cool_rate: float
    dip: tuple | None = None
    length_jitter: float = 0.0
    noise_sigma: float = 0.0
    base_len: int = 400
    name: str = ""

    def __post_init__(self):
        if not self.peak_temp > self.start_temp:
            raise InvalidParameterError("peak_temp must exceed start_temp")
        if self.ramp_rate <= 0 or self.cool_rate <= 0:
            raise InvalidParameterError("ramp_rate and cool_rate must be positive")
        for label, v in (("hold_len_frac", self.hold_len_frac), ("length_jitter", self.length_jitter)):
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{label} must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")
        if self.dip is not None:
            pos, depth, width = self.dip
            if not 0.0 <= pos <= 1.0 or depth < 0 or width <= 0:
                raise InvalidParameterError("dip must be (position in [0,1], depth >= 0, width > 0)")
        if self.ramp_len + self.hold_len >= self.base_len:
            raise InvalidParameterError("ramp and plateau do not fit in base_len; no room for cooling")

    @property
    def ramp_len(self) -> float:
        return (self.peak_temp - self.start_temp) / self.ramp_rate

    @property
    def hold_len(self) -> float:
        return self.hold_len_frac * self.base_len


DEFAULT_PALETTE = (
    ModeParams(300.0, 12.0, 1500.0, 0.15, 20.0, None, 0.1, 6.0, name="fast_efficient"),
    ModeParams(300.0, 4.0, 1450.0, 0.12, 8.0, None, 0.1, 6.0, name="slow_long"),
    ModeParams(300.0, 10.0, 1500.0, 0.40, 15.0, (0.5, 250.0, 12.0), 0.1, 6.0, name="dip_intervention"),
    ModeParams(300.0, 20.0, 1600.0, 0.60, 5.0, None, 0.1, 6.0, name="high_plateau"),
)


def melting_profile(params: ModeParams, t) -> np.ndarray:
    """Noise-free temperature at (possibly fractional) base-time steps ``t``."""
    p = params
    t = np.asarray(t, dtype=np.float64)
    rise = p.peak_temp - p.start_temp
    t_hold, t_cool = p.ramp_len, p.ramp_len + p.hold_len
    out = np.empty_like(t)
    ramp = t < t_hold
    hold = (t >= t_hold) & (t <= t_cool)
    cool = t > t_cool
    out[ramp] = p.start_temp + p.ramp_rate * t[ramp]
    out[hold] = p.peak_temp
    if p.dip is not None:
        pos, depth, width = p.dip
        centre = t_hold + pos * p.hold_len
        out[hold] -= depth * np.exp(-0.5 * ((t[hold] - centre) / width) ** 2)
    # initial slope of the cooling branch is -cool_rate
    out[cool] = p.start_temp + rise * np.exp(-p.cool_rate * (t[cool] - t_cool) / rise)
    return out


def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gen_melting_curve(params: ModeParams, seed: int, series_id: str = "s0") -> tuple[TimeSeries, str]:
    """One noisy, length-jittered curve; returns ``(series, params.name)``.

    The jittered length ``L`` is ``base_len * (1 + u * length_jitter)`` with
    ``u ~ U(-1, 1)``, and the curve is time-dilated so that all three stages
    keep their proportions.
    """
    rng = _generator(seed)
    u = rng.uniform(-1.0, 1.0)
    length = max(2, int(round(params.base_len * (1.0 + u * params.length_jitter))))
    t = np.arange(length) * (params.base_len / length)
    values = melting_profile(params, t)
    if params.noise_sigma > 0:
        values = values + rng.normal(0.0, params.noise_sigma, size=length)
    weight = rng.uniform(8.0, 12.0)
    # crude energy model: heat-up term plus a holding term, kWh
    energy = weight * (0.45 * (params.peak_temp - params.start_temp) + 0.8 * params.hold_len * length / params.base_len)
    meta = {"weight": float(weight), "energy": float(energy), "duration": length * SAMPLE_SECONDS}
    return TimeSeries(series_id, values, meta), params.name


def gen_dataset(modes=DEFAULT_PALETTE, n_per_mode: int = 50, seed: int = 0):
    """Shuffled dataset of ``n_per_mode`` curves per mode.

    Returns ``(series_list, labels)`` where ``labels[i]`` is the index of the
    mode that generated ``series_list[i]``.
    """
    modes = list(modes)
    if len(modes) < 2:
        raise InvalidParameterError("need at least two modes")
    if n_per_mode < 1:
        raise InvalidParameterError("n_per_mode must be >= 1; an empty dataset is not useful")
    rng = _generator(seed)
    labels = np.repeat(np.arange(len(modes)), n_per_mode)
    seeds = rng.integers(0, 2**63, size=labels.size)
    order = rng.permutation(labels.size)
    width = max(4, int(math.log10(labels.size)) + 1)
    series = []
    for pos, src in enumerate(order):
        s, _ = gen_melting_curve(modes[labels[src]], int(seeds[src]), f"s{pos:0{width}d}")
        series.append(s)
    return series, labels[order]


def write_dataset(series, path, metadata_path=None):
    """Write curves in the long CSV format (timestamps in seconds).

    With ``metadata_path`` a ``series_id,weight,energy,duration`` sidecar is
    written too.
    """
    from .io import write_long_csv, write_metadata_csv

    write_long_csv(series, path, SAMPLE_SECONDS)
    if metadata_path is not None:
        write_metadata_csv(series, metadata_path)
