"""Blockwise Whittle likelihood for log spectral ratios and its per-frequency maximization.

Each term ``i`` of the likelihood is a scenario block (or the aggregated baseline) with
linear predictor ``eta_i = log a + Dbar_i delta0 + dDbar_i delta1`` and contributes

    -1/2 [ n_i eta_i + S_i exp(-eta_i) ]

per full-circle frequency, where ``n_i = R_s - 1`` and ``S_i = R_s Ibar_i`` for a transient
block, and ``n = S_scale = K`` (the number of aggregated fine ordinates) for the baseline.
This is a Gamma log-likelihood with log link, so every frequency is an independent convex
problem in ``(log a, delta0, delta1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .periodogram import BaselinePeriodogram, LocalPeriodogramSet, half_multiplicity, n_half, nearest_fitted

BASELINE_LABEL = "__baseline__"
MAX_NEWTON = 100
GRAD_TOL = 1e-10
_EXP_FLOOR = -700.0


class UnidentifiableDeltaError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class TransientBlocks:
    """Periodograms of one scenario with warming and warming rate at its block midpoints."""

    periodograms: LocalPeriodogramSet
    delta: np.ndarray          # (B, L)
    rate: np.ndarray           # (B, L)

    def __post_init__(self):
        B, L = self.periodograms.n_blocks, self.periodograms.values.shape[1]
        for name in ("delta", "rate"):
            v = np.asarray(getattr(self, name), float)
            if v.ndim < 2:
                v = np.broadcast_to(v.reshape(-1, 1) if v.ndim == 1 else v, (B, L))
            if v.shape != (B, L):
                raise ValueError(f"{name} must be (n_blocks, n_loc) = {(B, L)}, got {v.shape}")
            object.__setattr__(self, name, np.ascontiguousarray(v))


@dataclass(frozen=True)
class WhittleData:
    """Stacked likelihood terms on the half grid ``j = 0 .. M//2``.

    ``S`` is ``(T, L, H)``, ``n`` is ``(T,)`` and ``x`` is ``(T, L, 2)`` holding the two
    regressors of each term (zero for the baseline term).
    """

    S: np.ndarray
    n: np.ndarray
    x: np.ndarray
    block: int
    labels: tuple = field(default=())

    @property
    def n_terms(self) -> int:
        return self.S.shape[0]

    @property
    def n_loc(self) -> int:
        return self.S.shape[1]

    @property
    def n_freq(self) -> int:
        return self.S.shape[2]

    @property
    def freqs(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_freq) / self.block

    @property
    def weights(self) -> np.ndarray:
        """Half of the full-circle multiplicity of each half-grid ordinate."""
        return half_multiplicity(self.block) / 2

    @property
    def is_baseline(self) -> np.ndarray:
        return np.array([lab == BASELINE_LABEL for lab in self.labels])

    def design(self, with_rate: bool = True) -> np.ndarray:
        """``(T, L, p)`` design with an intercept column first."""
        ones = np.ones(self.x.shape[:2] + (1,))
        cols = self.x if with_rate else self.x[..., :1]
        return np.concatenate([ones, cols], axis=2)

    def select(self, keep) -> "WhittleData":
        keep = np.asarray(keep, bool)
        return WhittleData(self.S[keep], self.n[keep], self.x[keep], self.block,
                           tuple(l for l, k in zip(self.labels, keep) if k))

    def without(self, label: str) -> "WhittleData":
        return self.select([lab != label for lab in self.labels])

    def only(self, label: str) -> "WhittleData":
        return self.select([lab == label for lab in self.labels])

    def locations(self, locs) -> "WhittleData":
        locs = np.atleast_1d(locs)
        return WhittleData(self.S[:, locs], self.n, self.x[:, locs], self.block, self.labels)


def build_whittle_data(transient: Sequence[TransientBlocks], baseline: BaselinePeriodogram | None
                       ) -> WhittleData:
    """Stack transient blocks and the baseline term into one :class:`WhittleData`."""
    if not transient:
        raise ValueError("at least one transient scenario is required")
    block = transient[0].periodograms.block
    S, n, x, labels = [], [], [], []
    for tb in transient:
        p = tb.periodograms
        if p.block != block:
            raise ValueError("all scenarios must share the block length")
        if p.n_realizations < 2:
            raise ValueError("contrast periodograms need >=2 realizations")
        S.append(p.n_realizations * p.half())
        n.extend([p.n_realizations - 1.0] * p.n_blocks)
        x.append(np.stack([tb.delta, tb.rate], axis=2))
        labels.extend([p.scenario] * p.n_blocks)
    if baseline is not None:
        if baseline.block != block:
            raise ValueError("baseline periodogram aggregated to a different block length")
        L = baseline.values.shape[0]
        S.append(baseline.n_aggregated * baseline.half()[None])
        n.append(float(baseline.n_aggregated))
        x.append(np.zeros((1, L, 2)))
        labels.append(BASELINE_LABEL)
    S = np.concatenate(S)
    return WhittleData(S, np.asarray(n, float), np.concatenate(x), block, tuple(labels))


# --------------------------------------------------------------------------- likelihood

def linear_predictor(data: WhittleData, log_a, delta0, delta1=None) -> np.ndarray:
    """``eta`` of shape ``(T, L, H)`` for parameters shaped ``(L, H)``."""
    eta = np.asarray(log_a, float)[None] + data.x[:, :, 0, None] * np.asarray(delta0, float)[None]
    if delta1 is not None:
        eta = eta + data.x[:, :, 1, None] * np.asarray(delta1, float)[None]
    return eta


def _terms(data: WhittleData, eta: np.ndarray) -> np.ndarray:
    return data.n[:, None, None] * eta + data.S * np.exp(-np.maximum(eta, _EXP_FLOOR))


def whittle_loglik(data: WhittleData, log_a, delta0, delta1=None, per_frequency: bool = False):
    """Likelihood summed over terms and the full frequency circle.

    Returns ``(L,)`` values, or ``(L, H)`` half-grid contributions (already weighted by the
    multiplicity) when ``per_frequency`` is set.
    """
    if np.any(data.S < 0):
        raise ValueError("nonpositive periodogram: negative ordinates")
    val = -data.weights * _terms(data, linear_predictor(data, log_a, delta0, delta1)).sum(axis=0)
    return val if per_frequency else val.sum(axis=-1)


def whittle_gradient(data: WhittleData, log_a, delta0, delta1) -> np.ndarray:
    """Gradient of the per-frequency likelihood in ``(log a, delta0, delta1)``; ``(3, L, H)``."""
    eta = linear_predictor(data, log_a, delta0, delta1)
    r = data.S * np.exp(-np.maximum(eta, _EXP_FLOOR)) - data.n[:, None, None]
    X = data.design()
    return data.weights * np.einsum("tlh,tlp->plh", r, X)


def whittle_hessian(data: WhittleData, log_a, delta0, delta1) -> np.ndarray:
    """Hessian of the per-frequency likelihood; ``(L, H, 3, 3)``, negative semidefinite."""
    eta = linear_predictor(data, log_a, delta0, delta1)
    w = data.S * np.exp(-np.maximum(eta, _EXP_FLOOR))
    X = data.design()
    return -data.weights[:, None, None] * np.einsum("tlh,tlp,tlq->lhpq", w, X, X)


def fisher_information(data: WhittleData, with_rate: bool = True) -> np.ndarray:
    """Expected information per location and (interior) frequency; ``(L, p, p)``.

    With ``eta`` at the truth ``E[S exp(-eta)] = n``, so the information no longer depends
    on the spectrum and is the same at every frequency.
    """
    X = data.design(with_rate)
    return np.einsum("t,tlp,tlq->lpq", data.n, X, X)


def rough_covariance(data: WhittleData) -> np.ndarray:
    """``(V00, V11, V01)`` per location from the inverse information; shape ``(3, L)``."""
    F = fisher_information(data)
    Finv = np.linalg.inv(F)
    return np.stack([Finv[:, 1, 1], Finv[:, 2, 2], Finv[:, 1, 2]])


def first_order_bias(data: WhittleData, with_rate: bool = True) -> np.ndarray:
    """Leading ``O(1/n)`` bias of the per-frequency MLE in ``(log a, delta0[, delta1])``.

    For the Gamma likelihood with log link the Cox-Snell bias is
    ``-1/2 I^{-1} sum_i n_i h_i x_i`` with ``I = sum_i n_i x_i x_i^T`` and
    ``h_i = x_i^T I^{-1} x_i``; it depends only on the design, so it is the same at every
    interior frequency.  Returns ``(3, L)`` with a zero ``delta1`` row for the reduced model.
    """
    X = data.design(with_rate)
    Finv = np.linalg.inv(fisher_information(data, with_rate))
    h = np.einsum("tlp,lpq,tlq->tl", X, Finv, X)
    b = -0.5 * np.einsum("lpq,t,tl,tlq->pl", Finv, data.n, h, X)
    return b if with_rate else np.vstack([b, np.zeros((1, data.n_loc))])


def saturated_loglik(data: WhittleData, per_frequency: bool = False):
    """Likelihood with a free spectrum for every term and frequency."""
    if np.any(data.S <= 0):
        raise ValueError("nonpositive periodogram: saturated likelihood undefined")
    n = data.n[:, None, None]
    val = -data.weights * (n * (np.log(data.S / n) + 1.0)).sum(axis=0)
    return val if per_frequency else val.sum(axis=-1)


def profile_log_a(data: WhittleData, delta0, delta1=None) -> np.ndarray:
    """Closed-form maximizer of ``log a`` with the deltas held fixed; ``(L, H)``."""
    offset = linear_predictor(data, np.zeros(data.S.shape[1:]), delta0, delta1)
    num = np.sum(data.S * np.exp(-np.maximum(offset, _EXP_FLOOR)), axis=0)
    return np.log(num / data.n.sum())


# --------------------------------------------------------------------------- maximization

def check_identifiable(data: WhittleData, rtol: float = 1e-8) -> None:
    """Require the transient regressors ``(Dbar, dDbar)`` to have rank 2 at every location."""
    xt = data.x[~data.is_baseline] if data.labels else data.x
    if xt.shape[0] < 2:
        raise UnidentifiableDeltaError("delta terms unidentifiable: fewer than two transient blocks")
    norm = np.sqrt(np.sum(xt ** 2, axis=0))                     # (L, 2)
    if np.any(norm == 0):
        l = int(np.flatnonzero(np.any(norm == 0, axis=1))[0])
        raise UnidentifiableDeltaError(f"delta terms unidentifiable at location {l}: a regressor is zero")
    sv = np.linalg.svd(np.transpose(xt / norm, (1, 0, 2)), compute_uv=False)
    bad = sv[:, -1] < rtol * sv[:, 0]
    if np.any(bad):
        l = int(np.flatnonzero(bad)[0])
        raise UnidentifiableDeltaError(
            f"delta terms unidentifiable at location {l}: warming and warming rate are collinear")


def _newton(S, n, X, init, max_iter=MAX_NEWTON, tol=GRAD_TOL):
    """Minimize ``sum_i n_i eta_i + S_i exp(-eta_i)``, ``eta = X beta``, for many problems.

    ``S`` is ``(T, L, H)``, ``X`` is ``(T, L, p)`` with columns of comparable scale, ``init``
    is ``(p, L, H)``.  Returns ``beta``, the final gradient and iteration counts.
    """
    beta = init.copy()

    def objective(b):
        eta = np.einsum("tlp,plh->tlh", X, b)
        terms = n[:, None, None] * eta + S * np.exp(-np.maximum(eta, _EXP_FLOOR))
        return np.sum(terms, axis=0), np.sum(np.abs(terms), axis=0)

    # the summands can cancel, so rounding slack scales with their magnitude, not with f
    f, mag = objective(beta)
    iters = np.zeros(S.shape[1:], int)
    active = np.ones(S.shape[1:], bool)
    g = None
    for it in range(max_iter + 1):
        eta = np.einsum("tlp,plh->tlh", X, beta)
        w = S * np.exp(-np.maximum(eta, _EXP_FLOOR))
        g = np.einsum("tlh,tlp->plh", n[:, None, None] - w, X)
        gmax = np.max(np.abs(g), axis=0)
        active = gmax > tol * np.maximum(n.sum(), 1.0) * 1e-2
        if not np.any(active) or it == max_iter:
            break
        H = np.einsum("tlh,tlp,tlq->lhpq", w, X, X)
        H = H + 1e-14 * np.trace(H, axis1=2, axis2=3)[..., None, None] * np.eye(X.shape[2])
        step = np.linalg.solve(H, np.moveaxis(g, 0, -1)[..., None])[..., 0]
        step = np.moveaxis(step, -1, 0)
        slope = np.sum(g * step, axis=0)                        # > 0 (descent along -step)
        t = np.ones(S.shape[1:])
        todo = active.copy()
        new = beta.copy()
        for _ in range(60):
            cand = beta - t * step
            fc, _ = objective(cand)
            ok = todo & (fc <= f - 1e-4 * t * slope + 1e-13 * mag)
            new[:, ok] = cand[:, ok]
            f = np.where(ok, fc, f)
            todo &= ~ok
            if not np.any(todo):
                break
            t = np.where(todo, t / 2, t)
        iters += active
        beta = new
        mag = objective(beta)[1]
    return beta, g, iters, active


@dataclass(frozen=True)
class RoughFit:
    """Per-frequency maximum likelihood estimates on the half grid.

    ``fitted`` marks frequencies estimated directly; the others (DC and Nyquist) carry the
    nearest fitted neighbour's deltas and a profiled ``log a``.
    """

    log_a: np.ndarray           # (L, H)
    delta: np.ndarray           # (2, L, H); row 1 is zero for the reduced model
    cov: np.ndarray             # (3, L): V00, V11, V01 of the rough deltas
    fitted: np.ndarray          # (H,) bool
    grad_norm: np.ndarray       # (L, H) at the optimum, in natural parameters
    iterations: np.ndarray      # (L, H)
    with_rate: bool = True
    bias: np.ndarray | None = None   # (3, L) first-order bias of (log a, delta0, delta1)

    @property
    def delta_corrected(self) -> np.ndarray:
        """Rough deltas with the first-order bias removed; equal to ``delta`` if unknown."""
        return self.delta if self.bias is None else self.delta - self.bias[1:, :, None]

    @property
    def log_a_corrected(self) -> np.ndarray:
        return self.log_a if self.bias is None else self.log_a - self.bias[0][:, None]


def interior_mask(block: int) -> np.ndarray:
    H = n_half(block)
    m = np.ones(H, bool)
    m[0] = False
    if block % 2 == 0:
        m[-1] = False
    if not np.any(m):
        raise ValueError("block too short: no interior frequencies")
    return m


def fill_edges(values: np.ndarray, fitted: np.ndarray) -> np.ndarray:
    """Copy the nearest fitted frequency into unfitted ones along the last axis."""
    return values[..., nearest_fitted(fitted)]


def maximize_whittle(data: WhittleData, with_rate: bool = True, max_iter: int = MAX_NEWTON) -> RoughFit:
    """Safeguarded Newton per location and interior frequency.

    Starts from ``delta = 0`` and ``log a`` at the pooled mean periodogram; the design
    columns are rescaled to unit maximum so one tolerance serves every parameter.
    """
    if with_rate:
        check_identifiable(data)
    elif np.all(data.x[..., 0] == 0):
        raise UnidentifiableDeltaError("delta terms unidentifiable: warming is identically zero")
    fitted = interior_mask(data.block)
    S = data.S[..., fitted]
    if np.any(S <= 0):
        raise ValueError("nonpositive periodogram: cannot fit the Whittle likelihood")
    X = data.design(with_rate)
    scale = np.max(np.abs(X), axis=0)                              # (L, p)
    scale[scale == 0] = 1.0
    Xs = X / scale
    p = X.shape[2]
    init = np.zeros((p,) + S.shape[1:])
    init[0] = np.log(S.sum(axis=0) / data.n.sum())
    beta, g, iters, active = _newton(S, data.n, Xs, init, max_iter)
    if np.any(active):
        l, j = np.argwhere(active)[0]
        jj = int(np.flatnonzero(fitted)[j])
        raise ConvergenceError(
            f"Whittle maximization did not converge in {max_iter} iterations at location {l}, "
            f"frequency index {jj}", {"location": int(l), "frequency_index": jj,
                                      "gradient": np.abs(g[:, l, j]).tolist()})
    coef = beta / np.moveaxis(scale, 1, 0)[:, :, None]
    H = data.n_freq
    delta = np.zeros((2, data.n_loc, H))
    delta[0][..., fitted] = coef[1]
    if with_rate:
        delta[1][..., fitted] = coef[2]
    delta = fill_edges(delta, fitted)
    log_a = np.empty((data.n_loc, H))
    log_a[..., fitted] = coef[0]
    log_a[..., ~fitted] = profile_log_a(data, delta[0], delta[1])[..., ~fitted]
    gnat = whittle_gradient(data, log_a, delta[0], delta[1] if with_rate else np.zeros_like(delta[0]))
    if not with_rate:
        gnat = gnat[:2]
    grad = np.where(fitted, np.sqrt(np.sum(gnat ** 2, axis=0)), 0.0)
    if with_rate:
        cov = rough_covariance(data)
    else:
        Finv = np.linalg.inv(fisher_information(data, with_rate=False))
        cov = np.stack([Finv[:, 1, 1], np.zeros(data.n_loc), np.zeros(data.n_loc)])
    full_iters = np.zeros((data.n_loc, H), int)
    full_iters[..., fitted] = iters
    return RoughFit(log_a, delta, cov, fitted, grad, full_iters, with_rate, first_order_bias(data, with_rate))
