"""Local (blockwise) periodograms of contrasts and the aggregated baseline periodogram."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def n_half(block: int) -> int:
    """Number of ordinates on ``[0, pi]`` for a length-``block`` DFT."""
    return block // 2 + 1


def half_multiplicity(block: int) -> np.ndarray:
    """How many full-circle ordinates each half-grid ordinate stands for."""
    mult = np.full(n_half(block), 2.0)
    mult[0] = 1.0
    if block % 2 == 0:
        mult[-1] = 1.0
    return mult


def nearest_fitted(fitted) -> np.ndarray:
    """Index of the nearest ``True`` entry of ``fitted`` for every position."""
    fitted = np.asarray(fitted, bool)
    idx = np.flatnonzero(fitted)
    if idx.size == 0:
        raise ValueError("no fitted positions")
    pos = np.arange(fitted.size)
    k = np.searchsorted(idx, pos)
    left = idx[np.maximum(k - 1, 0)]
    right = idx[np.minimum(k, idx.size - 1)]
    # ties go to the lower index
    return np.where(np.abs(pos - left) <= np.abs(right - pos), left, right)


def periodogram(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """``|sum_t x_t e^{-i t w_j}|^2 / (2 pi n)`` at ``w_j = 2 pi j/n`` along ``axis``."""
    n = x.shape[axis]
    f = np.fft.fft(x, axis=axis)
    return (f.real ** 2 + f.imag ** 2) / (2 * np.pi * n)


@dataclass(frozen=True)
class LocalPeriodogramSet:
    """Realization-averaged block periodograms for one scenario.

    ``values`` is ``(B, L, M)`` on the full circle ``w_j = 2 pi j/M``; block ``b`` covers
    days ``b M .. (b+1) M - 1`` of the run.
    """

    values: np.ndarray
    block: int
    n_realizations: int
    scenario: str = ""

    @property
    def n_blocks(self) -> int:
        return self.values.shape[0]

    @property
    def midpoints(self) -> np.ndarray:
        return np.arange(self.n_blocks) * self.block + (self.block - 1) / 2

    def half(self) -> np.ndarray:
        return self.values[..., :n_half(self.block)]


def local_periodograms(contrasts, block: int, scenario: str = "") -> LocalPeriodogramSet:
    """Block periodograms of ``(R, N, L)`` contrasts, averaged over the ``R`` realizations.

    A trailing partial block is dropped with a warning.
    """
    q = np.asarray(contrasts, dtype=float)
    if q.ndim == 2:
        q = q[..., None]
    if q.ndim != 3:
        raise ValueError("contrasts must be (R, N) or (R, N, L)")
    R, N, L = q.shape
    if block < 2:
        raise ValueError("block length must be at least 2")
    if block > N:
        raise ValueError(f"block length {block} exceeds series length {N}")
    B = N // block
    if B * block != N:
        warnings.warn(f"dropping trailing partial block of {N - B * block} days "
                      f"(series length {N} is not a multiple of {block})", stacklevel=2)
    blocks = q[:, :B * block].reshape(R, B, block, L)
    I = periodogram(blocks, axis=2).mean(axis=0)
    return LocalPeriodogramSet(np.ascontiguousarray(I.transpose(0, 2, 1)), block, R, scenario)


@dataclass(frozen=True)
class BaselinePeriodogram:
    """Baseline periodogram box-averaged onto the block grid; ``values`` is ``(L, M)``.

    ``n_aggregated`` fine ordinates contribute to each coarse ordinate, so ``n_aggregated
    * values / a(w)`` is approximately Gamma distributed with that shape.
    """

    values: np.ndarray
    block: int
    n_aggregated: int
    n_time: int

    def half(self) -> np.ndarray:
        return self.values[..., :n_half(self.block)]


def aggregation_weights(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of the box filter averaging ``k`` fine ordinates.

    Odd ``k`` uses offsets ``-(k-1)/2 .. (k-1)/2``.  Even ``k`` uses ``-k/2 .. k/2`` with half
    weight at both ends, which keeps the aggregate even in frequency and gives every fine
    ordinate total weight one.
    """
    if k % 2:
        off = np.arange(-(k // 2), k // 2 + 1)
        return off, np.full(off.size, 1.0 / k)
    off = np.arange(-(k // 2), k // 2 + 1)
    w = np.full(off.size, 1.0 / k)
    w[0] = w[-1] = 0.5 / k
    return off, w


def baseline_periodogram(x, block: int) -> BaselinePeriodogram:
    """Full-length periodogram of the ``(N_B, L)`` baseline, aggregated to spacing ``2 pi/M``.

    ``N_B`` is truncated to a multiple of ``M`` so that the coarse grid is a subgrid of the
    fine one.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < block:
        raise ValueError(f"baseline length {n} shorter than block {block}")
    k = n // block
    n_use = k * block
    if n_use != n:
        warnings.warn(f"truncating baseline from {n} to {n_use} days (multiple of the block length)",
                      stacklevel=2)
    I = periodogram(x[:n_use], axis=0)                 # (N_B, L)
    off, w = aggregation_weights(k)
    centre = np.arange(block) * k
    agg = np.zeros((block, x.shape[1]))
    for o, wo in zip(off, w):
        agg += wo * I[(centre + o) % n_use]
    return BaselinePeriodogram(np.ascontiguousarray(agg.T), block, k, n_use)
