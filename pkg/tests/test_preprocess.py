import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoclim.grid import DAYS_PER_YEAR, doy_index
from evoclim.preprocess import (DegenerateVarianceError, SeasonalModel, compute_contrasts, deseasonalize,
                                fit_mean_seasonal_cycle, fit_seasonal, fit_variance_seasonal_cycle,
                                harmonic_basis, reseasonalize)

N10 = 10 * DAYS_PER_YEAR


def _day(n):
    return doy_index(n) + 1.0


@pytest.mark.parametrize("c", [0.0, 3.5, -273.15])
def test_constant_series_has_flat_cycle(c):
    fit = fit_mean_seasonal_cycle(np.full(N10, c))
    assert np.allclose(fit.cycle, c, atol=1e-10)
    assert np.allclose(fit.cos_coef, 0, atol=1e-10) and np.allclose(fit.sin_coef, 0, atol=1e-10)


@pytest.mark.parametrize("k", [1, 3, 10])
def test_pure_harmonic_recovered_exactly(k):
    y = 5 * np.cos(2 * np.pi * k * _day(N10) / DAYS_PER_YEAR)
    fit = fit_mean_seasonal_cycle(y, 10)
    expected = np.zeros(10)
    expected[k - 1] = 5.0
    assert np.max(np.abs(fit.cos_coef - expected)) < 1e-10
    assert np.max(np.abs(fit.sin_coef)) < 1e-10


def test_noisy_harmonic_within_ls_standard_error(rng):
    n = 100 * DAYS_PER_YEAR
    y = 5 * np.cos(2 * np.pi * _day(n) / DAYS_PER_YEAR) + rng.standard_normal(n)
    fit = fit_mean_seasonal_cycle(y, 10)
    X = harmonic_basis(doy_index(n), 10)
    se = np.sqrt(np.linalg.inv(X.T @ X)[1, 1])
    assert abs(fit.cos_coef[0] - 5.0) < 3 * se


def test_harmonic_columns_orthogonal_over_whole_years():
    X = harmonic_basis(doy_index(2 * DAYS_PER_YEAR), 10)
    G = X.T @ X
    assert np.allclose(G - np.diag(np.diag(G)), 0, atol=1e-8)


def test_short_series_rejected():
    with pytest.raises(ValueError, match="shorter"):
        fit_mean_seasonal_cycle(np.zeros(400))


def test_white_noise_gives_flat_variance_cycle(rng):
    r = rng.standard_normal(200 * DAYS_PER_YEAR)
    D = fit_variance_seasonal_cycle(r)
    assert np.max(np.abs(D - 1)) < 0.05


def test_known_modulation_recovered(rng):
    n = 200 * DAYS_PER_YEAR
    d = np.arange(1, DAYS_PER_YEAR + 1)
    true = 1 + 0.5 * np.cos(2 * np.pi * d / DAYS_PER_YEAR)
    true /= np.sqrt(np.mean(true ** 2))
    r = true[doy_index(n)] * rng.standard_normal(n)
    D = fit_variance_seasonal_cycle(r)
    assert np.max(np.abs(D - true)) <= 0.05


def test_constant_series_is_degenerate():
    with pytest.raises(DegenerateVarianceError, match="degenerate variance"):
        fit_variance_seasonal_cycle(np.ones(3 * DAYS_PER_YEAR))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
def test_variance_cycle_normalized(seed, hw):
    r = np.random.default_rng(seed).standard_normal((2 * DAYS_PER_YEAR, 2))
    D = fit_variance_seasonal_cycle(r, hw)
    assert np.all(D > 0)
    assert np.allclose(np.mean(D ** 2, axis=0), 1.0, atol=1e-12)


def _model(rng, L=3):
    m = rng.normal(size=(DAYS_PER_YEAR, L))
    D = np.exp(0.2 * rng.normal(size=(DAYS_PER_YEAR, L)))
    return SeasonalModel(m, D)


def test_seasonal_mean_alone_deseasonalizes_to_zero(rng):
    s = _model(rng)
    m, _ = s.daily(3 * DAYS_PER_YEAR)
    assert np.all(deseasonalize(m, s) == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 800), st.integers(0, 364))
def test_reseasonalize_inverts_deseasonalize(seed, n, start):
    g = np.random.default_rng(seed)
    s = _model(g)
    y = 280 + 10 * g.normal(size=(n, 3))
    back = reseasonalize(deseasonalize(y, s, start), s, start)
    assert np.allclose(back, y, rtol=0, atol=1e-12 * 300)


def test_deseasonalized_variance_near_one(rng):
    n = 50 * DAYS_PER_YEAR
    d = np.arange(1, DAYS_PER_YEAR + 1)
    true_m = 10 * np.cos(2 * np.pi * d / DAYS_PER_YEAR)
    true_D = 1 + 0.4 * np.sin(2 * np.pi * d / DAYS_PER_YEAR)
    true_D /= np.sqrt(np.mean(true_D ** 2))
    idx = doy_index(n)
    y = true_m[idx] + true_D[idx] * rng.standard_normal(n)
    x = deseasonalize(y, fit_seasonal(y))
    assert abs(np.var(x) - 1) < 0.02
    # lag-1 autocorrelation of a white input stays near zero
    assert abs(np.corrcoef(x[1:], x[:-1])[0, 1]) < 4 / np.sqrt(n)


def test_seasonal_grid_round_trip(rng):
    s = _model(rng)
    back = SeasonalModel.from_grid(s.to_grid())
    assert np.array_equal(back.mean, s.mean) and np.array_equal(back.scale, s.scale)


def test_identical_realizations_have_zero_contrast(rng):
    run = rng.normal(size=(DAYS_PER_YEAR, 2))
    q = compute_contrasts(np.stack([run, run]), _model(rng, 2))
    assert np.all(q == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_contrasts_sum_to_zero(seed, R):
    g = np.random.default_rng(seed)
    y = 280 + g.normal(size=(R, 400, 3))
    q = compute_contrasts(y, _model(g))
    assert np.max(np.abs(q.sum(axis=0))) <= 1e-10 * np.max(np.abs(q))


def test_contrast_variance_matches_mean_removal(rng):
    R = 8
    y = rng.standard_normal((R, 20000))
    q = compute_contrasts(y, np.ones(DAYS_PER_YEAR))
    assert abs(q.var() - (R - 1) / R) < 0.02


def test_single_realization_rejected():
    with pytest.raises(ValueError, match="contrasts need >=2 realizations"):
        compute_contrasts(np.zeros((1, 10, 1)), np.ones((DAYS_PER_YEAR, 1)))


def test_fit_seasonal_removes_trend(rng):
    n = 10 * DAYS_PER_YEAR
    trend = np.linspace(-1, 1, n)
    y = 3 * np.cos(2 * np.pi * _day(n) / DAYS_PER_YEAR) + trend + 0.1 * rng.standard_normal(n)
    s = fit_seasonal(y, trend=trend)
    assert np.max(np.abs(s.mean[:, 0] - 3 * np.cos(2 * np.pi * np.arange(1, 366) / 365))) < 0.03
