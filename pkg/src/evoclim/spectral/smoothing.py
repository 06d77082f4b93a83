"""Variable-bandwidth quadratic-kernel smoothing of rough estimates and its bandwidth choice.

Rough estimates live on the half grid ``j = 0 .. M//2``; they are even and periodic on the
full circle, so a kernel reaching past 0 or pi is folded back onto the half grid.  The
smoother is therefore an ``(H, H)`` matrix whose rows sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .periodogram import n_half, nearest_fitted

BANDWIDTH_GRID = (25, 50, 100, 200, 400, 800)
TRANSITION_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class BandwidthParams:
    """Minimum half-width ``m0``, maximum half-width ``m1`` and transition point ``p``."""

    m0: float
    m1: float
    p: float

    def __post_init__(self):
        if not 0 < self.m0 <= self.m1:
            raise ValueError(f"need 0 < m0 <= m1, got m0={self.m0}, m1={self.m1}")
        if not 0 < self.p < 1:
            raise ValueError(f"transition p must lie in (0, 1), got {self.p}")

    @classmethod
    def fixed(cls, m: float) -> "BandwidthParams":
        return cls(m, m, 0.5)

    def to_list(self) -> list:
        return [float(self.m0), float(self.m1), float(self.p)]


def h_profile(u, p: float) -> np.ndarray:
    """Raised-cosine ramp from 0 at ``u = 0`` to 1 at ``u = p``, flat at 1 afterwards.

    ``u = omega/pi`` is the frequency normalized to ``[0, 1]``.
    """
    u = np.asarray(u, float)
    return np.where(u < p, 0.5 * (1 - np.cos(np.pi * np.minimum(u, p) / p)), 1.0)


def bandwidth_profile(params: BandwidthParams, block: int) -> np.ndarray:
    """Half-widths ``M_j = (m1 - m0) h(omega_j/pi) + m0`` on the half grid."""
    u = 2 * np.arange(n_half(block)) / block
    return (params.m1 - params.m0) * h_profile(u, params.p) + params.m0


@lru_cache(maxsize=8)
def _smoothing_matrix(m0: float, m1: float, p: float, block: int) -> np.ndarray:
    H = n_half(block)
    mj = bandwidth_profile(BandwidthParams(m0, m1, p), block)
    kj = np.floor(mj).astype(np.int64)
    width = 2 * kj + 1
    row = np.repeat(np.arange(H), width)
    start = np.repeat(np.cumsum(width) - width, width)
    k = np.arange(row.size) - start - kj[row]
    w = 1.0 - (k / (mj[row] + 1.0)) ** 2
    w /= np.bincount(row, weights=w, minlength=H)[row]
    c = (row + k) % block
    c = np.minimum(c, block - c)
    W = np.bincount(row * H + c, weights=w, minlength=H * H).reshape(H, H)
    W.setflags(write=False)
    return W


def smoothing_matrix(params: BandwidthParams, block: int) -> np.ndarray:
    """Row ``j`` holds the folded kernel weights producing the smoothed value at ``omega_j``."""
    return _smoothing_matrix(float(params.m0), float(params.m1), float(params.p), int(block))


def fill_matrix(fitted: np.ndarray) -> np.ndarray:
    """Linear map copying the nearest fitted ordinate into each unfitted one."""
    nearest = nearest_fitted(fitted)
    F = np.zeros((nearest.size, nearest.size))
    F[np.arange(nearest.size), nearest] = 1.0
    return F


def effective_weights(params: BandwidthParams, block: int, fitted: np.ndarray) -> np.ndarray:
    """Smoother acting on the directly fitted ordinates, i.e. ``W @ fill_matrix(fitted)``."""
    W = smoothing_matrix(params, block)
    fitted = np.asarray(fitted, bool)
    nearest = nearest_fitted(fitted)
    out = np.zeros_like(W)
    for c in np.flatnonzero(~fitted):
        out[:, nearest[c]] += W[:, c]
    out[:, fitted] += W[:, fitted]
    return out


def smooth_delta(rough, params: BandwidthParams, block: int | None = None) -> np.ndarray:
    """Smooth rough estimates along the last (half-grid frequency) axis."""
    rough = np.asarray(rough, float)
    H = rough.shape[-1]
    block = block if block is not None else 2 * (H - 1)
    if n_half(block) != H:
        raise ValueError(f"half grid of length {H} does not match block {block}")
    return rough @ smoothing_matrix(params, block).T


def cv_score(rough: np.ndarray, fitted: np.ndarray, params: BandwidthParams, block: int) -> float:
    """Leave-one-out score ``sum (smoothed - rough)^2 / (1 - w_self)^2`` over fitted ordinates."""
    W = effective_weights(params, block, fitted)
    lev = np.diag(W)[fitted]
    if np.any(lev >= 1):
        return math.inf
    resid = (rough @ W.T - rough)[..., fitted] / (1 - lev)
    return math.fsum((resid * resid).ravel())


def candidate_grid(bandwidths=BANDWIDTH_GRID, transitions=TRANSITION_GRID) -> list[BandwidthParams]:
    """All ``(m0 <= m1, p)`` combinations, ordered smoothest first for tie-breaking."""
    out = [BandwidthParams(m0, m1, p) for m0, m1, p in product(bandwidths, bandwidths, transitions)
           if m0 <= m1]
    return sorted(out, key=lambda b: (-b.m1, -b.m0, b.p))


def cross_validate_bandwidth(rough, fitted, block: int, grid=None, rtol: float = 1e-12
                             ) -> tuple[BandwidthParams, dict]:
    """Minimize the leave-one-out score summed over the locations in ``rough`` (``(L, H)``).

    Scores within ``rtol`` of the best are ties, resolved toward larger ``m1``, then larger
    ``m0``, then smaller ``p``.  All-equal rough estimates score zero everywhere and select the
    smoothest candidate.
    """
    rough = np.atleast_2d(np.asarray(rough, float))
    fitted = np.asarray(fitted, bool)
    grid = candidate_grid() if grid is None else sorted(grid, key=lambda b: (-b.m1, -b.m0, b.p))
    cache, scores = {}, {}
    for b in grid:
        key = (b.m0, b.m1, b.p if b.m0 != b.m1 else None)
        if key not in cache:
            cache[key] = cv_score(rough, fitted, b, block)
        scores[b] = cache[key]
    vals = np.array([scores[b] for b in grid])
    best = np.min(vals)
    tol = rtol * abs(best) + 1e-300
    choice = next(b for b, v in zip(grid, vals) if v <= best + tol)
    return choice, {tuple(b.to_list()): scores[b] for b in grid}
