"""Observation-driven simulation: decorrelate with the source spectra, recolour with the target.

For ``sqrt(rho(t, w)) = exp(u)`` with ``u = (Dbar(t) d0(w) + dDbar(t) d1(w)) / 2`` the product
``C_N(sqrt(rho)) x`` is expanded as

    sum_{p < P} sum_{m <= p}  Dbar^{p-m} dDbar^m  *  synth( d0^{p-m} d1^m x ) / (2^p m! (p-m)!)

so each application costs ``P (P + 1) / 2`` inverse FFTs.  Working in the time domain, the
operator ``K = C_N(sqrt(rho)) C_N(1)^{-1}`` is real and maps real series to real series.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.spatial import ConvexHull, QhullError

from .mean_emulator import WarmingPath
from .preprocess import SeasonalModel
from .spectral.model import SpectralChangeModel

TAYLOR_ORDER = 10
TAYLOR_TOL = 1e-9
SOLVE_TOL = 1e-8
MAX_ITER = 200
RESTART = 50
RESIDUE_TOL = 1e-8
WARN_EXPONENT = 2.0


class TaylorAccuracyError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


class ResidueError(RuntimeError):
    pass


def half_grid(values, n: int) -> np.ndarray:
    """Values on ``omega_j = 2 pi j/n``, ``j = 0..n//2``, from a callable, half or full array."""
    h = n // 2 + 1
    if callable(values):
        return np.asarray(values(2 * np.pi * np.arange(h) / n), float) * np.ones(h)
    v = np.asarray(values, float)
    if v.ndim == 0:
        return np.full(h, float(v))
    if v.size == n:
        return v[:h].copy()
    if v.size == h:
        return v.copy()
    raise ValueError(f"spectral values of length {v.size} fit neither {n} nor {h} ordinates")


def _max_abs_exponent(dbar, rate, d0, d1) -> float:
    """``max_{t,j} |dbar_t d0_j + rate_t d1_j|``, using hull vertices of the ``(dbar, rate)`` cloud."""
    pts = np.unique(np.column_stack([dbar, rate]), axis=0)
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts, qhull_options="QJ").vertices]
        except QhullError:
            pass
    return float(np.max(np.abs(pts[:, :1] * d0[None] + pts[:, 1:] * d1[None])))


@dataclass
class TransferOperator:
    """Truncated-Taylor representation of ``C_N(sqrt(rho))`` for one location.

    ``delta0`` and ``delta1`` are on the half grid; ``dbar`` and ``rate`` are daily series of
    length ``N``.  Regressors and sensitivities are rescaled so each factor is at most one in
    magnitude before powers are formed.
    """

    delta0: np.ndarray
    delta1: np.ndarray
    dbar: np.ndarray
    rate: np.ndarray
    order: int = TAYLOR_ORDER
    tol: float = TAYLOR_TOL
    T: np.ndarray = field(init=False, repr=False)
    W: np.ndarray = field(init=False, repr=False)
    mean_rho: np.ndarray = field(init=False, repr=False)
    max_exponent: float = field(init=False)
    remainder_bound: float = field(init=False)

    def __post_init__(self):
        self.dbar = np.asarray(self.dbar, float).reshape(-1)
        self.rate = np.asarray(self.rate, float).reshape(-1)
        n = self.dbar.size
        if n < 2 or self.rate.size != n:
            raise ValueError("warming and rate series must share a length of at least 2")
        if self.order < 1:
            raise ValueError("Taylor order must be at least 1")
        self.delta0 = half_grid(self.delta0, n)
        self.delta1 = half_grid(self.delta1, n)
        P = self.order
        u = 0.5 * _max_abs_exponent(self.dbar, self.rate, self.delta0, self.delta1)
        self.max_exponent = u
        self.remainder_bound = u ** P / math.factorial(P) * math.exp(2 * u)
        if u > WARN_EXPONENT:
            warnings.warn(f"max |log rho|/2 = {u:.3g} exceeds {WARN_EXPONENT}; Taylor accuracy degrades",
                          stacklevel=3)
        if self.remainder_bound > self.tol:
            raise TaylorAccuracyError(
                f"Taylor order {P} too low for max |log rho|/2 = {u:.3g} "
                f"(remainder bound {self.remainder_bound:.2e} > {self.tol:.0e}); raise the order")
        sD = np.max(np.abs(self.dbar)) or 1.0
        sG = np.max(np.abs(self.rate)) or 1.0
        Dn, Gn = self.dbar / sD, self.rate / sG
        a0, a1 = self.delta0 * sD, self.delta1 * sG
        T, W = [], []
        for p in range(P):
            for m in range(p + 1):
                t = Dn ** (p - m) * Gn ** m
                w = a0 ** (p - m) * a1 ** m / (2.0 ** p * math.factorial(m) * math.factorial(p - m))
                if np.any(t) and np.any(w):
                    T.append(t)
                    W.append(w)
        self.T = np.array(T)
        self.W = np.array(W)
        self.mean_rho = self._mean_rho(Dn, Gn, a0, a1)

    @property
    def n(self) -> int:
        return self.dbar.size

    @property
    def n_terms(self) -> int:
        return self.W.shape[0]

    def _mean_rho(self, Dn, Gn, a0, a1) -> np.ndarray:
        """Time mean of ``rho(t, w) = exp(2u)`` from moments of the rescaled regressors."""
        P = self.order + 8
        out = np.zeros_like(a0)
        for p in range(P):
            for m in range(p + 1):
                mom = np.mean(Dn ** (p - m) * Gn ** m)
                if mom:
                    out += mom * a0 ** (p - m) * a1 ** m / (math.factorial(m) * math.factorial(p - m))
        return np.maximum(out, np.exp(-2 * self.max_exponent))

    # ------------------------------------------------------------------ time domain
    def matvec(self, u: np.ndarray) -> np.ndarray:
        """``K u = C_N(sqrt(rho)) C_N(1)^{-1} u`` for real series ``u`` (last axis time)."""
        U = np.fft.rfft(u, axis=-1)
        parts = np.fft.irfft(self.W * U[..., None, :], n=self.n, axis=-1)
        return np.sum(self.T * parts, axis=-2)

    def precondition(self, u: np.ndarray) -> np.ndarray:
        """Frequency filter by ``1/sqrt(time-mean rho)``."""
        return np.fft.irfft(np.fft.rfft(u, axis=-1) / np.sqrt(self.mean_rho), n=self.n, axis=-1)

    # ------------------------------------------------------------------ coefficient domain
    def apply(self, x: np.ndarray) -> np.ndarray:
        """``C_N(sqrt(rho)) x`` for a coefficient vector ``x`` of length ``N``.

        Hermitian inputs give real outputs; the imaginary residue is checked and dropped.
        """
        x = np.asarray(x)
        n = self.n
        if x.shape[-1] != n:
            raise ValueError(f"coefficient vector must have length {n}")
        j = np.arange(n)
        fold = np.minimum(j, n - j)
        Wfull = self.W[:, fold]
        z = np.fft.ifft(Wfull * x[..., None, :], axis=-1) * n
        z = np.sqrt(2 * np.pi / n) * np.roll(z, -1, axis=-1)
        out = np.sum(self.T * z, axis=-2)
        if np.allclose(x[..., (-j) % n], np.conj(x), rtol=0, atol=1e-14 * (np.max(np.abs(x)) + 1e-300)):
            scale = np.linalg.norm(out)
            resid = np.linalg.norm(out.imag)
            if resid > RESIDUE_TOL * max(scale, 1e-300):
                raise ResidueError(f"imaginary residue {resid / scale:.2e} of the transfer exceeds "
                                   f"{RESIDUE_TOL:.0e}: asymmetric spectra or extreme rho")
            return out.real
        return out


def coefficients_from_series(u: np.ndarray) -> np.ndarray:
    """``C_N(1)^{-1} u = E^H u / sqrt(2 pi N)`` with ``E_tj = exp(i omega_j t)``, ``t = 1..N``."""
    u = np.asarray(u, float)
    n = u.shape[-1]
    phase = np.exp(-2j * np.pi * np.arange(n) / n)
    return phase * np.fft.fft(u, axis=-1) / np.sqrt(2 * np.pi * n)


def series_from_coefficients(x: np.ndarray) -> np.ndarray:
    """``C_N(1) x``; real part of the synthesis for Hermitian ``x``."""
    x = np.asarray(x)
    n = x.shape[-1]
    z = np.roll(np.fft.ifft(x, axis=-1) * n, -1, axis=-1) * np.sqrt(2 * np.pi / n)
    return z


@dataclass
class TransferPlan:
    """Source (observation period) and target operators for one location."""

    source: TransferOperator
    target: TransferOperator

    def __post_init__(self):
        if self.source.n != self.target.n:
            raise ValueError("source and target operators must share the series length")

    @property
    def n(self) -> int:
        return self.source.n


def apply_transfer(plan: TransferPlan, which: str, x: np.ndarray) -> np.ndarray:
    """``C_N(sqrt(rho)) x`` with ``which`` in ``{"source", "target"}``."""
    if which not in ("source", "target"):
        raise ValueError("which must be 'source' or 'target'")
    return getattr(plan, which).apply(x)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    history: list


def solve_operator(op: TransferOperator, y: np.ndarray, tol: float = SOLVE_TOL,
                   max_iter: int = MAX_ITER) -> tuple[np.ndarray, SolveInfo]:
    """Solve ``K v = y`` in the time domain by right-preconditioned restarted GMRES."""
    y = np.asarray(y, float)
    n = y.size
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return np.zeros(n), SolveInfo(0, 0.0, [])
    A = LinearOperator((n, n), matvec=lambda z: op.matvec(op.precondition(z)), dtype=float)
    history: list[float] = []
    restart = min(RESTART, max_iter)
    cycles = -(-max_iter // restart)
    z, _ = gmres(A, y, rtol=tol, atol=0.0, restart=restart, maxiter=cycles,
                 callback=history.append, callback_type="pr_norm")
    v = op.precondition(z)
    resid = float(np.linalg.norm(y - op.matvec(v)) / ynorm)
    info = SolveInfo(len(history), resid, history)
    if resid > tol or len(history) > max_iter:
        raise SolverError(f"transfer solve did not reach relative residual {tol:.0e} within "
                          f"{max_iter} iterations (final {resid:.2e})", history)
    return v, info


def solve_transfer(plan: TransferPlan, y: np.ndarray, tol: float = SOLVE_TOL,
                   max_iter: int = MAX_ITER, return_info: bool = False):
    """Coefficients ``x`` with ``C_N(sqrt(rho_source)) x = y`` (Hermitian, length ``N``)."""
    op = plan.source if isinstance(plan, TransferPlan) else plan
    v, info = solve_operator(op, y, tol, max_iter)
    x = coefficients_from_series(v)
    return (x, info) if return_info else x


# --------------------------------------------------------------------------- pipeline

def plan_for_location(model: SpectralChangeModel, loc: int, source: WarmingPath, target: WarmingPath,
                      order: int = TAYLOR_ORDER) -> TransferPlan:
    """Operators for location ``loc``; both warming paths must already be per location."""
    n = source.n_days
    if target.n_days != n:
        raise ValueError("source and target periods must have the same length")
    w = 2 * np.pi * np.arange(n // 2 + 1) / n
    d = model.select(loc).delta_at(w)[:, 0]
    src = TransferOperator(d[0], d[1], source.delta[:, loc], source.rate[:, loc], order)
    tgt = TransferOperator(d[0], d[1], target.delta[:, loc], target.rate[:, loc], order)
    return TransferPlan(src, tgt)


def transform_series(plan: TransferPlan, w: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """``K_target K_source^{-1} w`` for one de-seasonalized, detrended series."""
    v, _ = solve_operator(plan.source, w, tol)
    return plan.target.matvec(v)


def simulate(obs, seasonal: SeasonalModel, trend, model: SpectralChangeModel, source: WarmingPath,
             target: WarmingPath, mean_change, order: int = TAYLOR_ORDER, tol: float = 1e-10,
             locations=None, executor=None) -> np.ndarray:
    """Transform ``(N0, L)`` observations toward a target period.

    ``trend`` is the observed forced trend and ``mean_change`` the local mean change between
    target and observation periods, both ``(N0, L)``.  ``source`` and ``target`` are per-location
    warming paths over the observation and target periods.  Output is ``(N0, L)`` kelvin.
    """
    y = np.asarray(obs, float)
    squeeze = y.ndim == 1
    y = y[:, None] if squeeze else y
    n, L = y.shape
    trend = np.broadcast_to(np.asarray(trend, float).reshape(n, -1), (n, L))
    change = np.broadcast_to(np.asarray(mean_change, float).reshape(n, -1), (n, L))
    locs = np.arange(L) if locations is None else np.asarray(locations)
    m, D = seasonal.daily(n)
    w = (y - m - trend) / D

    def one(k):
        plan = plan_for_location(model, int(locs[k]), source, target, order)
        return transform_series(plan, w[:, k], tol)

    cols = list(executor.map(one, range(L))) if executor is not None else [one(k) for k in range(L)]
    out = m + trend + change + D * np.column_stack(cols)
    return out[:, 0] if squeeze else out
