"""Seasonal cycles in mean and marginal variance, de-seasonalizing and contrasts.

Temperatures are modelled as a mean seasonal cycle plus a uniformly modulated
process, ``y(t) = m(d) + D(d) x(t)``, with ``d`` the day of year.  The mean cycle is a
least-squares harmonic fit; ``D`` is the square root of a windowed variance averaged
across years and normalized so that ``mean_d D(d)**2 == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DAYS_PER_YEAR, GridFormatError, doy_index

OBS_HARMONICS = 10
HALF_WINDOW = 15


class DegenerateVarianceError(ValueError):
    pass


def harmonic_basis(doy: np.ndarray, n_harmonics: int) -> np.ndarray:
    """Columns ``[1, cos(2 pi k d/365), sin(2 pi k d/365), ...]`` for k = 1..K.

    ``doy`` is the 0-based day-of-year index; ``d = doy + 1``.
    """
    d = np.asarray(doy, dtype=float) + 1.0
    k = np.arange(1, n_harmonics + 1)
    arg = 2 * np.pi * np.outer(d, k) / DAYS_PER_YEAR
    out = np.empty((d.size, 1 + 2 * n_harmonics))
    out[:, 0] = 1.0
    out[:, 1::2] = np.cos(arg)
    out[:, 2::2] = np.sin(arg)
    return out


@dataclass(frozen=True)
class HarmonicFit:
    """Least-squares mean seasonal cycle; trailing axes follow the input's locations."""

    intercept: np.ndarray
    cos_coef: np.ndarray      # (K, ...)
    sin_coef: np.ndarray      # (K, ...)

    @property
    def n_harmonics(self) -> int:
        return self.cos_coef.shape[0]

    def evaluate(self, doy: np.ndarray) -> np.ndarray:
        basis = harmonic_basis(doy, self.n_harmonics)
        coef = np.concatenate([self.intercept[None], np.stack([self.cos_coef, self.sin_coef], 1)
                               .reshape((2 * self.n_harmonics,) + self.intercept.shape)])
        return np.tensordot(basis, coef, axes=1)

    @property
    def cycle(self) -> np.ndarray:
        """Values for each of the 365 days of the year."""
        return self.evaluate(np.arange(DAYS_PER_YEAR))


def fit_mean_seasonal_cycle(series, n_harmonics: int = OBS_HARMONICS, start_doy: int = 0) -> HarmonicFit:
    """Fit ``m(d) = b0 + sum_k g_k cos(2 pi k d/365) + z_k sin(2 pi k d/365)`` by least squares.

    ``series`` is ``(N,)`` or ``(N, L)``; all columns share one design.
    """
    y = np.asarray(series, dtype=float)
    if y.shape[0] < 2 * DAYS_PER_YEAR:
        raise ValueError(f"series shorter than two years ({y.shape[0]} days); cannot fit seasonal cycle")
    if n_harmonics < 1 or 2 * n_harmonics + 1 > DAYS_PER_YEAR:
        raise ValueError("n_harmonics must be between 1 and 182")
    X = harmonic_basis(doy_index(y.shape[0], start_doy), n_harmonics)
    coef, *_ = np.linalg.lstsq(X, y.reshape(y.shape[0], -1), rcond=None)
    coef = coef.reshape((X.shape[1],) + y.shape[1:])
    return HarmonicFit(coef[0], coef[1::2], coef[2::2])


def _by_year(x: np.ndarray, start_doy: int) -> np.ndarray:
    """Arrange ``(N, ...)`` daily values as ``(years, 365, ...)`` padded with NaN."""
    n = x.shape[0]
    n_years = -(-(start_doy + n) // DAYS_PER_YEAR)
    out = np.full((n_years * DAYS_PER_YEAR,) + x.shape[1:], np.nan)
    out[start_doy:start_doy + n] = x
    return out.reshape((n_years, DAYS_PER_YEAR) + x.shape[1:])


def fit_variance_seasonal_cycle(residuals, half_window: int = HALF_WINDOW, start_doy: int = 0) -> np.ndarray:
    """Seasonal modulation ``D(d)`` from mean-removed residuals, shaped ``(365, ...)``.

    For each day of year the sample variance of the values within ``d +/- half_window``
    (circular within the year) is pooled across years; ``D`` is its square root,
    normalized so that ``mean_d D(d)**2 == 1``.
    """
    r = np.asarray(residuals, dtype=float)
    if r.shape[0] < 2 * DAYS_PER_YEAR:
        raise ValueError("variance seasonal cycle needs at least two years of data")
    if not 0 <= half_window < DAYS_PER_YEAR // 2:
        raise ValueError("half_window out of range")
    yr = _by_year(r, start_doy)
    ok = np.isfinite(yr)
    x = np.where(ok, yr, 0.0)
    s0, s1, s2 = (np.zeros_like(x) for _ in range(3))
    for shift in range(-half_window, half_window + 1):
        s0 += np.roll(ok, shift, axis=1)
        xs = np.roll(x, shift, axis=1)
        s1 += xs
        s2 += xs * xs
    with np.errstate(invalid="ignore", divide="ignore"):
        ss = np.where(s0 > 1, s2 - s1 * s1 / np.maximum(s0, 1), 0.0)
    dof = np.maximum(s0 - 1, 0).sum(axis=0)
    var = ss.sum(axis=0) / np.maximum(dof, 1)
    if np.any(dof < 1) or not np.all(np.isfinite(var)) or np.any(var <= 0):
        raise DegenerateVarianceError("degenerate variance: windowed variance is zero or undefined")
    var = var / var.mean(axis=0)
    return np.sqrt(var)


@dataclass(frozen=True)
class SeasonalModel:
    """Per-location mean cycle ``m`` and variance modulation ``D``, each ``(365, L)``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, float)
        d = np.asarray(self.scale, float)
        if m.ndim == 1:
            m, d = m[:, None], d[:, None]
        if m.shape != d.shape or m.shape[0] != DAYS_PER_YEAR:
            raise ValueError("seasonal cycles must be (365, L)")
        if np.any(d <= 0):
            raise ValueError("variance modulation must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "scale", d)

    @property
    def n_loc(self) -> int:
        return self.mean.shape[1]

    def select(self, loc) -> "SeasonalModel":
        loc = np.atleast_1d(loc)
        return SeasonalModel(self.mean[:, loc], self.scale[:, loc])

    def daily(self, n_days: int, start_doy: int = 0) -> tuple[np.ndarray, np.ndarray]:
        idx = doy_index(n_days, start_doy)
        return self.mean[idx], self.scale[idx]

    def to_grid(self) -> np.ndarray:
        """Stack as a ``(730, L)`` array: mean cycle rows first, then ``D``."""
        return np.vstack([self.mean, self.scale])

    @classmethod
    def from_grid(cls, a: np.ndarray) -> "SeasonalModel":
        a = np.asarray(a, float)
        if a.shape[0] != 2 * DAYS_PER_YEAR:
            raise GridFormatError("seasonal grid must have 730 rows")
        return cls(a[:DAYS_PER_YEAR], a[DAYS_PER_YEAR:])


def fit_seasonal(series, n_harmonics: int = OBS_HARMONICS, half_window: int = HALF_WINDOW,
                 start_doy: int = 0, trend=None) -> SeasonalModel:
    """Fit both seasonal cycles to ``(N, L)`` data, after removing ``trend`` if given."""
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if trend is not None:
        y = y - np.asarray(trend, float).reshape(y.shape[0], -1)
    fit = fit_mean_seasonal_cycle(y, n_harmonics, start_doy)
    resid = y - fit.evaluate(doy_index(y.shape[0], start_doy))
    scale = fit_variance_seasonal_cycle(resid, half_window, start_doy)
    return SeasonalModel(fit.cycle, scale)


def _shape_like(cycle_daily: np.ndarray, y: np.ndarray) -> np.ndarray:
    if y.ndim == 1:
        return cycle_daily[:, 0] if cycle_daily.ndim == 2 else cycle_daily
    return cycle_daily


def deseasonalize(y, seasonal: SeasonalModel, start_doy: int = 0) -> np.ndarray:
    """``x(t) = (y(t) - m(d(t))) / D(d(t))`` along the leading (time) axis."""
    y = np.asarray(y, dtype=float)
    m, d = seasonal.daily(y.shape[0], start_doy)
    return (y - _shape_like(m, y)) / _shape_like(d, y)


def reseasonalize(x, seasonal: SeasonalModel, start_doy: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m, d = seasonal.daily(x.shape[0], start_doy)
    return _shape_like(m, x) + _shape_like(d, x) * x


def compute_contrasts(runs, scale, start_doy: int = 0) -> np.ndarray:
    """De-seasonalized contrasts ``(y_r - mean_k y_k) / D(d)`` for ``(R, N, ...)`` runs.

    ``scale`` is the ``(365, ...)`` variance modulation (or a :class:`SeasonalModel`).
    """
    y = np.asarray(runs, dtype=float)
    if y.shape[0] < 2:
        raise ValueError("contrasts need >=2 realizations")
    d = scale.scale if isinstance(scale, SeasonalModel) else np.asarray(scale, float)
    daily = d[doy_index(y.shape[1], start_doy)]
    if y.ndim == 2 and daily.ndim == 2:
        daily = daily[:, 0]
    return (y - y.mean(axis=0, keepdims=True)) / daily
