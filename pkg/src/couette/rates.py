"""Decay-rate fitting and half-life extraction for norm time series."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(value) = log(prefactor) - c_fit * nu^(1/3) * t.

    ``status`` is ``"ok"``, ``"refused"`` (rms residual above the threshold),
    ``"insufficient"`` (fewer than three points inside the window) or
    ``"no-decay"``. ``half_life`` is read off the series directly when it
    crosses one half of its initial value, otherwise derived from ``c_fit``.
    """

    c_fit: float
    prefactor: float
    window: tuple[float, float]
    residual: float
    half_life: float
    status: str = "ok"
    super_exponential: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def crossing_time(times, values, level: float) -> float:
    """First time the series drops to ``level``, log-linear interpolation; nan if never."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    below = np.nonzero(v <= level)[0]
    if below.size == 0:
        return math.nan
    k = below[0]
    if k == 0:
        return float(t[0])
    v0, v1 = v[k - 1], v[k]
    if v1 <= 0:
        return float(t[k - 1] + (t[k] - t[k - 1]) * (v0 - level) / (v0 - v1))
    frac = (math.log(v0) - math.log(level)) / (math.log(v0) - math.log(v1))
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))


def fit_decay(times, values, nu: float, window: tuple[float, float] = (1e-6, 1e-1),
              max_residual: float = 0.1) -> RateFit:
    """Fit an exponential rate in units of nu^(1/3) over the part of the series with
    ``window[0] <= value/value[0] <= window[1]``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.size < 2:
        raise ValueError("need matching time and value arrays with at least two samples")
    if nu <= 0:
        raise ValueError("nu must be positive")
    v_init = v[0]
    nan = math.nan
    if v_init <= 0 or v[-1] >= v_init:
        return RateFit(nan, nan, (nan, nan), nan, nan, "no-decay")

    half = crossing_time(t, v, 0.5 * v_init)
    rel = v / v_init
    sel = (rel >= window[0]) & (rel <= window[1]) & (v > 0)
    if sel.sum() < 3:
        return RateFit(nan, nan, (nan, nan), nan, half, "insufficient")

    ts = t[sel]
    x = nu ** (1.0 / 3.0) * ts
    y = np.log(v[sel])
    lr = stats.linregress(x, y)
    resid = y - (lr.intercept + lr.slope * x)
    rms = float(np.sqrt(np.mean(resid**2)))
    c_fit = -float(lr.slope)
    curv = np.polyfit(x, y, 2)[0] if sel.sum() >= 4 else 0.0
    status = "ok" if rms <= max_residual else "refused"
    if math.isnan(half) and c_fit > 0:
        half = math.log(2.0) / (c_fit * nu ** (1.0 / 3.0))
    return RateFit(
        c_fit=c_fit,
        prefactor=float(math.exp(lr.intercept)),
        window=(float(ts[0]), float(ts[-1])),
        residual=rms,
        half_life=float(half),
        status=status,
        super_exponential=bool(status == "refused" and curv < 0),
    )
