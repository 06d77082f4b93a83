"""Goodness-of-fit and emulation diagnostics for the covariance-change model."""
from __future__ import annotations

import numpy as np

from .model import SpectralChangeModel
from .periodogram import n_half
from .whittle import WhittleData, profile_log_a, saturated_loglik, whittle_loglik


def model_loglik(model: SpectralChangeModel, data: WhittleData) -> np.ndarray:
    """Likelihood at the smoothed deltas with ``log a`` profiled out; ``(L,)``."""
    log_a = profile_log_a(data, model.delta_hat[0], model.delta_hat[1])
    return whittle_loglik(data, log_a, model.delta_hat[0], model.delta_hat[1])


def deviance(model: SpectralChangeModel, data: WhittleData) -> np.ndarray:
    """``2 (L_saturated - L_model)`` per location; nonnegative by construction."""
    if data.block != model.block:
        raise ValueError("data and model use different block lengths")
    return 2.0 * (saturated_loglik(data) - model_loglik(model, data))


def predictive_loglik(model: SpectralChangeModel, heldout: WhittleData) -> np.ndarray:
    """Likelihood of held-out scenario terms under the model's fitted spectrum; ``(L,)``.

    Uses ``log a`` profiled at the smoothed deltas on the training data (the rough ``log a``
    for models saved without it).
    """
    if heldout.block != model.block:
        raise ValueError("held-out data and model use different block lengths")
    if np.any(heldout.S <= 0):
        raise ValueError("nonpositive periodogram in held-out data")
    log_a = model.log_a_rough if model.log_a_hat is None else model.log_a_hat
    return whittle_loglik(heldout, log_a, model.delta_hat[0], model.delta_hat[1])


def quadratic_kernel(half_width: int) -> np.ndarray:
    k = np.arange(-half_width, half_width + 1)
    w = 1.0 - (k / (half_width + 1.0)) ** 2
    return w / w.sum()


def _circular_smooth(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    m = weights.size // 2
    out = np.zeros_like(x)
    for k, w in zip(range(-m, m + 1), weights):
        out += w * np.roll(x, -k, axis=-1)
    return out


def coherence_spectrum(x, y, half_width: int) -> np.ndarray:
    """Squared coherence of two series within one block, on the half grid.

    ``x`` and ``y`` are ``(n,)`` or ``(R, n)``; raw cross and marginal periodograms are
    averaged over the leading axis and then smoothed with a circular quadratic kernel.
    """
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    if x.shape != y.shape:
        raise ValueError("series must have matching shapes")
    n = x.shape[-1]
    if half_width < 0 or 2 * half_width + 1 > n:
        raise ValueError("smoothing width out of range")
    fx, fy = np.fft.fft(x, axis=-1), np.fft.fft(y, axis=-1)
    scale = 1.0 / (2 * np.pi * n)
    sxy = (fx * np.conj(fy)).mean(axis=0) * scale
    sxx = (np.abs(fx) ** 2).mean(axis=0) * scale
    syy = (np.abs(fy) ** 2).mean(axis=0) * scale
    w = quadratic_kernel(half_width)
    sxy = _circular_smooth(sxy, w)
    sxx, syy = _circular_smooth(sxx, w), _circular_smooth(syy, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        coh = np.abs(sxy) ** 2 / (sxx * syy)
    return coh[:n_half(n)]
