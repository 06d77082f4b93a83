"""Regional mean-response emulator, warming paths and local pattern scaling.

The regional daily mean under scenario ``s`` is modelled as

    mu_S(t) = b0 + b1 C(t) + sum_k [g_k cos + z_k sin](2 pi k t/365)
                          + C(t) sum_k [g'_k cos + z'_k sin](2 pi k t/365)

where ``C`` is an exponentially weighted memory of the log CO2 ratio,
``C(t) = phi C(t-1) + (1 - phi) log(co2(t)/co2_B)``.  The model is linear given
``phi``, so ``phi`` is chosen by profiling the residual sum of squares.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import lfilter

from .grid import DAYS_PER_YEAR, EnsembleError, ForcingTrajectory, RegionPartition, ScenarioEnsemble, doy_index
from .preprocess import OBS_HARMONICS, harmonic_basis

EMULATOR_HARMONICS = 6
PHI_GRID = np.round(np.arange(0, 1000) * 1e-3, 3)
PHI_MAX = 0.999999
RATE_WINDOW = DAYS_PER_YEAR


class UnidentifiableError(ValueError):
    pass


# --------------------------------------------------------------------------- forcing memory

def forcing_recursion(log_ratio, phi: float) -> np.ndarray:
    """``C(t) = phi C(t-1) + (1 - phi) u(t)`` with ``C`` zero before the first sample."""
    if not 0 <= phi < 1:
        raise ValueError(f"phi must lie in [0, 1), got {phi}")
    u = np.asarray(log_ratio, dtype=float)
    return lfilter([1.0 - phi], [1.0, -phi], u, axis=0)


def forcing_response(traj: ForcingTrajectory, phi: float, start_year: int, n_days: int,
                     lead: int = 0) -> np.ndarray:
    """``C(t)`` for ``n_days`` days from day 1 of ``start_year``, plus ``lead`` earlier days.

    The recursion starts where the baseline padding ends (or at the requested window if
    that is earlier), which is exact because ``log(co2/co2_B) = 0`` on the padding.
    """
    first = start_year if traj.first_year is None else min(traj.first_year, start_year)
    offset = (start_year - first) * DAYS_PER_YEAR
    pad = max(lead - offset, 0)
    u = traj.log_ratio(first, offset + n_days)
    c = forcing_recursion(np.concatenate([np.zeros(pad), u]), phi)
    return c[pad + offset - lead:]


# --------------------------------------------------------------------------- parameters

@dataclass(frozen=True)
class RegionMeanParams:
    """Coefficients of the regional mean model for one region."""

    beta0: float
    beta1: float
    phi: float
    gamma: np.ndarray
    zeta: np.ndarray
    gamma_c: np.ndarray
    zeta_c: np.ndarray
    rss: float = float("nan")

    def __post_init__(self):
        if not 0 <= self.phi < 1:
            raise ValueError("phi must lie in [0, 1)")
        for name in ("gamma", "zeta", "gamma_c", "zeta_c"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).reshape(-1))

    @property
    def n_harmonics(self) -> int:
        return self.gamma.size

    def _harm(self, doy, cos_c, sin_c):
        basis = harmonic_basis(doy, self.n_harmonics)
        return basis[:, 1::2] @ cos_c + basis[:, 2::2] @ sin_c

    def evaluate(self, c, doy) -> np.ndarray:
        """Regional mean for forcing memory ``c`` on 0-based days of year ``doy``."""
        c = np.asarray(c, float)
        return (self.beta0 + self.beta1 * c + self._harm(doy, self.gamma, self.zeta)
                + c * self._harm(doy, self.gamma_c, self.zeta_c))

    def change(self, c, doy) -> np.ndarray:
        """``mu(t) - mu_B(d)``: the part of the mean carried by ``C`` (baseline ``C = 0``)."""
        c = np.asarray(c, float)
        return c * (self.beta1 + self._harm(doy, self.gamma_c, self.zeta_c))

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "beta1": self.beta1, "phi": self.phi,
                "gamma": self.gamma.tolist(), "zeta": self.zeta.tolist(),
                "gamma_c": self.gamma_c.tolist(), "zeta_c": self.zeta_c.tolist(), "rss": self.rss}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegionMeanParams":
        return cls(float(d["beta0"]), float(d["beta1"]), float(d["phi"]), d["gamma"], d["zeta"],
                   d["gamma_c"], d["zeta_c"], float(d.get("rss", float("nan"))))


@dataclass(frozen=True)
class PatternScaling:
    """Per-location factors ``lambda_l`` relating local to regional mean change."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, float).reshape(-1)
        if not np.all(np.isfinite(lam)):
            raise ValueError("pattern scaling factors must be finite")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def unit(cls, n_loc: int) -> "PatternScaling":
        return cls(np.ones(n_loc))


@dataclass(frozen=True)
class MeanEmulatorParams:
    """Regional coefficients, pattern scaling and the forcing tables they were fitted with."""

    regions: dict[int, RegionMeanParams]
    scaling: PatternScaling
    partition: RegionPartition
    trajectories: dict[str, ForcingTrajectory] = field(default_factory=dict)

    def __post_init__(self):
        if self.scaling.lam.size != self.partition.n_loc:
            raise ValueError("pattern scaling and region partition disagree on the number of locations")
        missing = set(self.partition.ids) - set(self.regions)
        if missing:
            raise ValueError(f"no mean parameters for regions {sorted(missing)}")

    @property
    def n_loc(self) -> int:
        return self.partition.n_loc

    def region_params(self, loc: int) -> RegionMeanParams:
        return self.regions[int(self.partition.region_of[loc])]

    def trajectory(self, label: str) -> ForcingTrajectory:
        try:
            return self.trajectories[label]
        except KeyError:
            raise EnsembleError(f"no CO2 trajectory stored for scenario {label!r}") from None

    def to_json(self) -> dict:
        return {"regions": {str(k): v.to_dict() for k, v in sorted(self.regions.items())},
                "lambda": self.scaling.lam.tolist(),
                "region_of": self.partition.region_of.tolist(),
                "trajectories": {k: v.to_dict() for k, v in self.trajectories.items()}}

    @classmethod
    def from_json(cls, d: Mapping) -> "MeanEmulatorParams":
        return cls({int(k): RegionMeanParams.from_dict(v) for k, v in d["regions"].items()},
                   PatternScaling(d["lambda"]), RegionPartition(d["region_of"]),
                   {k: ForcingTrajectory.from_dict(v) for k, v in d.get("trajectories", {}).items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "MeanEmulatorParams":
        return cls.from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------- fitting

@dataclass(frozen=True)
class ScenarioMeans:
    """Ensemble-mean regional series for one scenario, weighted by its run count."""

    traj: ForcingTrajectory
    start_year: int
    values: np.ndarray          # (N, S)
    weight: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, float)
        object.__setattr__(self, "values", v[:, None] if v.ndim == 1 else v)


def scenario_means(ensemble: ScenarioEnsemble, partition: RegionPartition | None = None) -> list[ScenarioMeans]:
    """Regional means averaged over realizations, columns ordered by ``partition.ids``."""
    partition = partition or ensemble.regions
    out = []
    for runs in ensemble.scenarios.values():
        avg = runs.runs.mean(axis=0)
        reg = partition.regional_mean(avg)
        out.append(ScenarioMeans(runs.forcing, runs.start_year,
                                 np.column_stack([reg[r] for r in partition.ids]), runs.n_runs))
    return out


class _ProfileRSS:
    """Weighted residual sum of squares of the linear fit as a function of ``phi``.

    Everything except ``C`` is periodic in the day of year, so the normal equations are
    assembled from per-day sums of ``w``, ``wC``, ``wC^2``, ``wy`` and ``wCy``.
    """

    def __init__(self, data: Sequence[ScenarioMeans], column: int, n_harmonics: int):
        self.data = data
        self.col = column
        self.F = harmonic_basis(np.arange(DAYS_PER_YEAR), n_harmonics)
        self.doy = [doy_index(d.values.shape[0]) for d in data]
        w = np.concatenate([np.full(d.values.shape[0], d.weight) for d in data])
        y = np.concatenate([d.values[:, column] for d in data])
        self.center = float(np.sum(w * y) / np.sum(w))
        self.y = [d.values[:, column] - self.center for d in data]
        self.yy = float(sum(d.weight * np.sum(y * y) for d, y in zip(data, self.y)))

    def memory(self, phi: float) -> list[np.ndarray]:
        return [forcing_response(d.traj, phi, d.start_year, d.values.shape[0]) for d in self.data]

    def normal_equations(self, phi: float):
        sums = np.zeros((5, DAYS_PER_YEAR))
        for d, doy, y, c in zip(self.data, self.doy, self.y, self.memory(phi)):
            for k, v in enumerate((np.ones_like(c), c, c * c, y, c * y)):
                sums[k] += d.weight * np.bincount(doy, weights=v, minlength=DAYS_PER_YEAR)
        a0, a1, a2, b0, b1 = sums
        F = self.F
        g = lambda a: F.T @ (a[:, None] * F)
        xtx = np.block([[g(a0), g(a1)], [g(a1), g(a2)]])
        xty = np.concatenate([F.T @ b0, F.T @ b1])
        return xtx, xty, a1, a2

    def solve(self, phi: float):
        xtx, xty, a1, a2 = self.normal_equations(phi)
        scale = np.sqrt(np.maximum(np.diag(xtx), 1e-300))
        coef, *_ = np.linalg.lstsq(xtx / np.outer(scale, scale), xty / scale, rcond=1e-12)
        coef = coef / scale
        return coef, max(self.yy - float(coef @ xty), 0.0)

    def __call__(self, phi: float) -> float:
        return self.solve(phi)[1]


def fit_region(data: Sequence[ScenarioMeans], column: int = 0,
               n_harmonics: int = EMULATOR_HARMONICS, phi_grid=PHI_GRID) -> RegionMeanParams:
    """Profile ``phi`` on a grid, refine by bounded Brent search, return the OLS fit."""
    prof = _ProfileRSS(data, column, n_harmonics)
    if all(np.all(c == 0) for c in prof.memory(0.0)):
        raise UnidentifiableError("β₁ unidentifiable: CO2 never departs from the baseline in the data")
    rss = np.array([prof(p) for p in phi_grid])
    i = int(np.argmin(rss))
    lo = phi_grid[max(i - 1, 0)]
    hi = min(phi_grid[min(i + 1, len(phi_grid) - 1)], PHI_MAX)
    phi, best = float(phi_grid[i]), float(rss[i])
    if hi > lo:
        res = minimize_scalar(prof, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
        if res.fun < best:
            phi, best = float(res.x), float(res.fun)
    coef, rss_final = prof.solve(phi)
    K = n_harmonics
    base, mem = coef[:1 + 2 * K], coef[1 + 2 * K:]
    return RegionMeanParams(beta0=float(base[0]) + prof.center, beta1=float(mem[0]), phi=phi,
                            gamma=base[1::2], zeta=base[2::2], gamma_c=mem[1::2], zeta_c=mem[2::2],
                            rss=rss_final)


def fit_mean_emulator(data: Sequence[ScenarioMeans], partition: RegionPartition,
                      scaling: PatternScaling | None = None, n_harmonics: int = EMULATOR_HARMONICS,
                      phi_grid=PHI_GRID) -> MeanEmulatorParams:
    """Fit every region; columns of each ``ScenarioMeans.values`` follow ``partition.ids``."""
    if not any(np.any(d.traj.ppm != d.traj.co2_baseline) for d in data):
        raise UnidentifiableError("β₁ unidentifiable: no transient forcing in the data")
    regions = {r: fit_region(data, j, n_harmonics, phi_grid) for j, r in enumerate(partition.ids)}
    trajs = {d.traj.scenario.label: d.traj for d in data}
    return MeanEmulatorParams(regions, scaling or PatternScaling.unit(partition.n_loc), partition, trajs)


# --------------------------------------------------------------------------- warming paths

def centered_moving_average(x: np.ndarray, window: int, lead: int = 0) -> np.ndarray:
    """Centered running mean along axis 0, with the window truncated at the edges.

    ``x`` includes ``lead`` extra samples before the output range (and any samples after
    it) so that edge truncation only bites where no data exist.
    """
    h = window // 2
    cs = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    n = x.shape[0]
    i = np.arange(n)
    lo, hi = np.maximum(i - h, 0), np.minimum(i + window - h, n)
    cnt = (hi - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    return ((cs[hi] - cs[lo]) / cnt)[lead:]


@dataclass(frozen=True)
class WarmingPath:
    """Regional warming ``Dbar(t)`` (K) and its rate (K/day) at daily resolution.

    ``delta`` and ``rate`` are ``(n_days, S)`` with columns in ``partition.ids`` order; day
    ``t = 0`` is day 1 of ``start_year``.
    """

    scenario: str
    start_year: int
    delta: np.ndarray
    rate: np.ndarray
    region_ids: tuple = (0,)

    @property
    def n_days(self) -> int:
        return self.delta.shape[0]

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Linear interpolation at (possibly fractional) day offsets ``t``; rows per time."""
        t = np.asarray(t, float)
        days = np.arange(self.n_days)
        d = np.column_stack([np.interp(t, days, self.delta[:, j]) for j in range(self.delta.shape[1])])
        r = np.column_stack([np.interp(t, days, self.rate[:, j]) for j in range(self.rate.shape[1])])
        return d, r

    def block_midpoints(self, block: int) -> np.ndarray:
        n_blocks = self.n_days // block
        return np.arange(n_blocks) * block + (block - 1) / 2

    def at_blocks(self, block: int) -> tuple[np.ndarray, np.ndarray]:
        return self.at(self.block_midpoints(block))

    def for_locations(self, region_of: np.ndarray) -> "WarmingPath":
        """Expand region columns to one column per location."""
        col = {r: j for j, r in enumerate(self.region_ids)}
        idx = np.array([col[int(r)] for r in region_of])
        return WarmingPath(self.scenario, self.start_year, self.delta[:, idx], self.rate[:, idx],
                           tuple(int(r) for r in region_of))

    @classmethod
    def zero(cls, scenario: str, start_year: int, n_days: int, n_cols: int = 1) -> "WarmingPath":
        z = np.zeros((n_days, n_cols))
        return cls(scenario, start_year, z, z.copy(), tuple(range(n_cols)))


def warming_path(params: MeanEmulatorParams, traj: ForcingTrajectory, start_year: int, n_days: int,
                 smooth: bool = True) -> WarmingPath:
    """``Dbar = b1 C(t)`` and ``b1 (C(t) - C(t-1))`` averaged over a centered 365-day window."""
    ids = params.partition.ids
    h = RATE_WINDOW // 2
    lead = h + 1
    tail = 0
    if traj.last_year is not None:
        avail = (traj.last_year + 1 - start_year) * DAYS_PER_YEAR - n_days
        tail = int(np.clip(avail, 0, RATE_WINDOW))
    delta = np.empty((n_days, len(ids)))
    rate = np.empty_like(delta)
    for j, r in enumerate(ids):
        p = params.regions[r]
        c = forcing_response(traj, p.phi, start_year, n_days + tail, lead=lead)
        delta[:, j] = p.beta1 * c[lead:lead + n_days]
        dc = p.beta1 * np.diff(c)
        if smooth:
            rate[:, j] = centered_moving_average(dc, RATE_WINDOW, lead=lead - 1)[:n_days]
        else:
            rate[:, j] = dc[lead - 1:lead - 1 + n_days]
    return WarmingPath(traj.scenario.label, start_year, delta, rate, tuple(ids))


def local_mean_change(params: MeanEmulatorParams, traj: ForcingTrajectory, start_year: int,
                      n_days: int, locations=None) -> np.ndarray:
    """``lambda_l (mu_S(t) - mu_S^B(d))`` per day and location, shaped ``(n_days, L)``."""
    locs = np.arange(params.n_loc) if locations is None else np.atleast_1d(locations)
    doy = doy_index(n_days)
    out = np.empty((n_days, locs.size))
    cache: dict[int, np.ndarray] = {}
    for k, l in enumerate(locs):
        r = int(params.partition.region_of[l])
        if r not in cache:
            p = params.regions[r]
            cache[r] = p.change(forcing_response(traj, p.phi, start_year, n_days), doy)
        out[:, k] = params.scaling.lam[l] * cache[r]
    return out


# --------------------------------------------------------------------------- pattern scaling

def annual_means(x: np.ndarray) -> np.ndarray:
    n_years = x.shape[0] // DAYS_PER_YEAR
    if n_years < 1:
        raise ValueError("need at least one full year for annual means")
    return x[:n_years * DAYS_PER_YEAR].reshape((n_years, DAYS_PER_YEAR) + x.shape[1:]).mean(axis=1)


def fit_pattern_scaling(local_change, regional_change) -> PatternScaling:
    """Slope through the origin of annual-mean local change on regional change, per column."""
    loc = annual_means(np.asarray(local_change, float))
    reg = annual_means(np.asarray(regional_change, float))
    if loc.ndim == 1:
        loc, reg = loc[:, None], reg[:, None]
    ss = np.sum(reg * reg, axis=0)
    if np.any(ss <= 1e-300):
        raise ValueError("zero regional variation: pattern scaling undefined")
    return PatternScaling(np.sum(loc * reg, axis=0) / ss)


def pattern_scaling_from_ensemble(ensemble: ScenarioEnsemble, partition: RegionPartition | None = None
                                  ) -> PatternScaling:
    """Pattern scaling from transient ensemble means relative to the baseline time mean."""
    partition = partition or ensemble.regions
    base = ensemble.baseline.runs[0]
    base_loc = base.mean(axis=0)
    locs, regs = [], []
    for runs in ensemble.transient:
        n = (runs.n_time // DAYS_PER_YEAR) * DAYS_PER_YEAR
        avg = runs.runs.mean(axis=0)[:n]
        local = avg - base_loc
        reg = np.empty_like(local)
        for r in partition.ids:
            m = partition.members(r)
            reg[:, m] = local[:, m].mean(axis=1, keepdims=True)
        locs.append(local)
        regs.append(reg)
    return fit_pattern_scaling(np.concatenate(locs), np.concatenate(regs))


# --------------------------------------------------------------------------- observations

def fit_observation_trend(obs, traj: ForcingTrajectory, start_year: int, phi,
                          n_harmonics: int = OBS_HARMONICS) -> np.ndarray:
    """Forced mean trend ``b1 (C(t) - mean C)`` of observations, per location.

    Each column is regressed on ``[1, C, harmonics]`` with its own ``phi`` (a scalar or
    one value per column), so the returned trend has zero time mean.
    """
    y = np.asarray(obs, float)
    squeeze = y.ndim == 1
    y = y[:, None] if squeeze else y
    phis = np.broadcast_to(np.asarray(phi, float), (y.shape[1],))
    F = harmonic_basis(doy_index(y.shape[0]), n_harmonics)
    out = np.empty_like(y)
    for p in np.unique(phis):
        cols = np.flatnonzero(phis == p)
        c = forcing_response(traj, float(p), start_year, y.shape[0])
        cc = c - c.mean()
        if np.ptp(c) == 0:
            out[:, cols] = 0.0
            continue
        X = np.column_stack([F, cc])
        coef, *_ = np.linalg.lstsq(X, y[:, cols], rcond=None)
        out[:, cols] = np.outer(cc, coef[-1])
    return out[:, 0] if squeeze else out
