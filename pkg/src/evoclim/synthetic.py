"""Ground-truth generators: dense ``C_N`` matrices, exact evolutionary-GP draws, fixtures.

``C_N(A)`` has entries ``sqrt(2 pi/N) A(t, omega_j) exp(i omega_j t)`` for ``t = 1..N`` and
``omega_j = 2 pi j/N``.  With ``eps`` a Hermitian-symmetric standard complex Gaussian vector,
``z = C_N(sqrt(a)) eps`` is real and has covariance exactly ``C C^H``.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .grid import (BASELINE, DAYS_PER_YEAR, TRANSIENT, ForcingTrajectory, GridSpec, RegionPartition,
                   ScenarioEnsemble, ScenarioId, ScenarioRuns, doy_index, write_co2_csv,
                   write_grid_series, write_manifest)
from .mean_emulator import MeanEmulatorParams, PatternScaling, RegionMeanParams, warming_path

DENSE_LIMIT = 4096
DENSE_SAMPLING_MAX = 1024
PAIR_TOL = 1e-17


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Counter-based Philox stream for ``seed`` and a tuple of integer or string keys."""
    words = [int(seed)]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def fourier_grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def on_grid(f, n: int) -> np.ndarray:
    """Evaluate a function of ``omega`` (or pass through an array) on the full Fourier grid."""
    if callable(f):
        return np.asarray(f(fourier_grid(n)), float) * np.ones(n)
    a = np.asarray(f, float)
    return np.broadcast_to(a, (n,)).copy() if a.ndim == 0 else a


# --------------------------------------------------------------------------- dense reference

def dense_CN(A, n: int) -> np.ndarray:
    """Materialize ``C_N(A)``; ``A`` is an ``(N, N)`` array indexed ``[t-1, j]`` or ``A(t, omega)``."""
    if n > DENSE_LIMIT:
        raise ValueError(f"dense C_N limited to N <= {DENSE_LIMIT}, got {n}")
    t = np.arange(1, n + 1)[:, None]
    w = fourier_grid(n)[None, :]
    vals = A(t, w) if callable(A) else np.asarray(A, float)
    vals = np.broadcast_to(vals, (n, n))
    return np.sqrt(2 * np.pi / n) * vals * np.exp(1j * w * t)


def evolutionary_amplitude(a_base, delta0, delta1, dbar, rate) -> np.ndarray:
    """``sqrt(a(t, omega_j))`` as an ``(N, N)`` array for the log-linear change model."""
    n = np.asarray(dbar).size
    ab, d0, d1 = on_grid(a_base, n), on_grid(delta0, n), on_grid(delta1, n)
    dbar = np.asarray(dbar, float)[:, None]
    rate = np.asarray(rate, float)[:, None]
    return np.sqrt(ab)[None] * np.exp(0.5 * (dbar * d0[None] + rate * d1[None]))


def hermitian_normal(rng: np.random.Generator, n: int, size: int | tuple = ()) -> np.ndarray:
    """Standard complex Gaussian with ``eps[N-j] = conj(eps[j])``.

    DC (and Nyquist for even ``N``) are real ``N(0, 1)``; the others are ``(a + ib)/sqrt(2)``,
    so ``E[eps eps^H] = I``.
    """
    size = (size,) if isinstance(size, int) else tuple(size)
    h = n // 2 + 1
    re = rng.standard_normal(size + (h,))
    im = rng.standard_normal(size + (h,))
    half = (re + 1j * im) / np.sqrt(2)
    half[..., 0] = re[..., 0]
    if n % 2 == 0:
        half[..., -1] = re[..., -1]
    full = np.empty(size + (n,), complex)
    full[..., :h] = half
    full[..., h:] = np.conj(half[..., 1:n - h + 1][..., ::-1])
    return full


def _synthesis(coef: np.ndarray) -> np.ndarray:
    """``sqrt(2 pi/N) sum_j coef_j exp(i omega_j t)`` for ``t = 1..N``, real part."""
    n = coef.shape[-1]
    if np.iscomplexobj(coef):
        # the real part only sees the Hermitian part of the coefficients
        coef = 0.5 * (coef + np.conj(np.roll(coef[..., ::-1], 1, axis=-1)))
    z = np.fft.irfft(coef[..., :n // 2 + 1], n=n, axis=-1) * n
    return np.sqrt(2 * np.pi / n) * np.roll(z, -1, axis=-1)


def _cheb_expansion(values: np.ndarray, slope: np.ndarray, tol: float = 1e-15, max_deg: int = 64):
    """Chebyshev coefficients of ``x -> exp(slope_j x)`` on the range of ``values``.

    Returns ``(basis (N, K), coefs (K, n_freq))`` with ``exp(slope_j values_t)`` equal to
    ``basis @ coefs`` to about ``tol`` relative.
    """
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo <= 1e-300 or np.all(slope == 0):
        return np.ones((values.size, 1)), np.exp(slope * lo)[None]
    mid, half = (hi + lo) / 2, (hi - lo) / 2
    s = (values - mid) / half
    for deg in range(4, max_deg + 1, 4):
        nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        f = np.exp(np.outer(mid + half * nodes, slope))
        V = cheb.chebvander(nodes, deg)
        c = np.linalg.solve(V, f)
        if np.max(np.abs(c[-2:])) <= tol * np.max(np.abs(c[0])):
            break
    return cheb.chebvander(s, deg), c


def apply_evolutionary(a_base, delta0, delta1, dbar, rate, coef: np.ndarray,
                       method: str = "auto") -> np.ndarray:
    """``C_N(sqrt(a)) @ coef`` for coefficient vectors ``(..., N)`` without the Taylor engine."""
    coef = np.asarray(coef)
    n = coef.shape[-1]
    if method == "dense" or (method == "auto" and n <= DENSE_SAMPLING_MAX):
        C = dense_CN(evolutionary_amplitude(a_base, delta0, delta1, dbar, rate), n)
        return np.real(coef @ C.T)
    ab, d0, d1 = on_grid(a_base, n), on_grid(delta0, n), on_grid(delta1, n)
    b0, c0 = _cheb_expansion(np.asarray(dbar, float), 0.5 * d0)
    b1, c1 = _cheb_expansion(np.asarray(rate, float), 0.5 * d1)
    base = np.sqrt(ab) * coef
    out = np.zeros(coef.shape[:-1] + (n,))
    # |T_k| <= 1, so pairs far below the leading product cannot reach double precision
    size0, size1 = np.max(np.abs(c0), axis=1), np.max(np.abs(c1), axis=1)
    floor = PAIR_TOL * size0.max() * size1.max()
    for k in range(c0.shape[0]):
        for m in range(c1.shape[0]):
            if size0[k] * size1[m] >= floor:
                out += (b0[:, k] * b1[:, m]) * _synthesis(base * c0[k] * c1[m])
    return out


def sample_evolutionary_gp(rng: np.random.Generator, n: int, a_base, delta0=0.0, delta1=0.0,
                           dbar=None, rate=None, size: int = 1, method: str = "auto") -> np.ndarray:
    """``size`` real draws of ``C_N(sqrt(a)) eps`` with ``a = a_B exp(dbar d0 + rate d1)``.

    Spectra are functions of ``omega`` (or full-grid arrays) and must be even.
    """
    dbar = np.zeros(n) if dbar is None else np.asarray(dbar, float)
    rate = np.zeros(n) if rate is None else np.asarray(rate, float)
    eps = hermitian_normal(rng, n, size)
    stationary = not np.any(dbar) and not np.any(rate)
    if stationary and method == "auto":
        return _synthesis(np.sqrt(on_grid(a_base, n)) * eps)
    return apply_evolutionary(a_base, delta0, delta1, dbar, rate, eps, method)


def analytic_ar1_spectrum(coef: float, sigma2: float, omega) -> np.ndarray:
    """``sigma2 / (2 pi |1 - coef e^{-i omega}|^2)``."""
    if not abs(coef) < 1:
        raise ValueError("AR(1) coefficient must satisfy |coef| < 1")
    omega = np.asarray(omega, float)
    return sigma2 / (2 * np.pi * np.abs(1 - coef * np.exp(-1j * omega)) ** 2)


def cosine_series(coefs: Sequence[float]) -> Callable:
    """Even periodic function ``omega -> sum_k coefs[k] cos(k omega)``."""
    c = np.asarray(coefs, float)
    return lambda w: np.cos(np.multiply.outer(np.asarray(w, float), np.arange(c.size))) @ c


# --------------------------------------------------------------------------- fixtures

@dataclass
class ScenarioSpec:
    label: str
    n_runs: int
    start_year: int
    n_years: int
    co2_start: float
    co2_end: float
    kind: str = TRANSIENT

    def trajectory(self, co2_baseline: float) -> ForcingTrajectory:
        sid = ScenarioId(self.label, self.kind)
        if self.kind == BASELINE:
            return ForcingTrajectory.constant(sid, co2_baseline)
        years = self.start_year + np.arange(self.n_years)
        ppm = np.geomspace(self.co2_start, self.co2_end, self.n_years)
        return ForcingTrajectory(sid, years, ppm, co2_baseline)


@dataclass
class SyntheticSpec:
    """Everything needed to draw a synthetic ensemble from known truths.

    Spectral truths are cosine series in ``omega``; the baseline spectrum is AR(1).  The
    regional mean follows the emulator form with ``beta0 + beta1 C(t)`` plus a fixed
    seasonal cycle of amplitude ``seasonal_amplitude``; ``D(d)`` has relative modulation
    ``variance_modulation``.
    """

    n_lat: int = 2
    n_lon: int = 2
    seed: int = 0
    co2_baseline: float = 280.0
    baseline_years: int = 60
    baseline_start_year: int = 1000
    scenarios: list = field(default_factory=lambda: [
        ScenarioSpec("historical", 3, 1950, 40, 280.0, 390.0),
        ScenarioSpec("high", 3, 1990, 40, 350.0, 900.0)])
    ar_coef: float = 0.7
    ar_sigma2: float = 1.0
    delta0: list = field(default_factory=lambda: [-0.1, 0.05])
    delta1: list = field(default_factory=lambda: [0.0])
    beta0: float = 285.0
    beta1: float = 3.0
    phi: float = 0.995
    seasonal_amplitude: float = 10.0
    variance_modulation: float = 0.3
    n_regions: int = 1
    pattern_scale: list = field(default_factory=list)

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "scenarios" in d:
            d["scenarios"] = [s if isinstance(s, ScenarioSpec) else ScenarioSpec(**s) for s in d["scenarios"]]
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def n_loc(self) -> int:
        return self.n_lat * self.n_lon

    def partition(self) -> RegionPartition:
        return RegionPartition(np.arange(self.n_loc) * self.n_regions // self.n_loc)

    def scaling(self) -> PatternScaling:
        lam = np.asarray(self.pattern_scale, float) if self.pattern_scale else np.ones(self.n_loc)
        return PatternScaling(lam)

    def seasonal_truth(self) -> tuple[np.ndarray, np.ndarray]:
        d = np.arange(1, DAYS_PER_YEAR + 1)
        lat_shift = np.linspace(0, 1, self.n_loc)
        m = self.seasonal_amplitude * np.cos(2 * np.pi * d / DAYS_PER_YEAR)[:, None] * (1 + lat_shift[None])
        D = 1 + self.variance_modulation * np.sin(2 * np.pi * d / DAYS_PER_YEAR)
        D = D / np.sqrt(np.mean(D ** 2))
        return m, np.repeat(D[:, None], self.n_loc, axis=1)

    def mean_truth(self, trajectories: dict) -> MeanEmulatorParams:
        zeros = np.zeros(6)
        p = RegionMeanParams(self.beta0, self.beta1, self.phi, zeros, zeros, zeros, zeros)
        part = self.partition()
        return MeanEmulatorParams({r: p for r in part.ids}, self.scaling(), part, trajectories)


def make_synthetic_ensemble(spec: SyntheticSpec) -> tuple[ScenarioEnsemble, dict]:
    """Draw every scenario from the truth; returns the ensemble and a truth record."""
    grid = GridSpec(spec.n_lat, spec.n_lon)
    m, D = spec.seasonal_truth()
    trajs = {s.label: s.trajectory(spec.co2_baseline) for s in spec.scenarios}
    base_sid = ScenarioId("baseline", BASELINE)
    trajs["baseline"] = ForcingTrajectory.constant(base_sid, spec.co2_baseline)
    truth_mean = spec.mean_truth(trajs)
    a_base = lambda w: analytic_ar1_spectrum(spec.ar_coef, spec.ar_sigma2, w)
    d0, d1 = cosine_series(spec.delta0), cosine_series(spec.delta1)
    scenarios = {}
    lam = spec.scaling().lam
    entries = [("baseline", base_sid, 1, spec.baseline_start_year, spec.baseline_years)]
    entries += [(s.label, ScenarioId(s.label, s.kind), s.n_runs, s.start_year, s.n_years)
                for s in spec.scenarios]
    for label, sid, n_runs, start, n_years in entries:
        n = n_years * DAYS_PER_YEAR
        wp = warming_path(truth_mean, trajs[label], start, n).for_locations(truth_mean.partition.region_of)
        doy = doy_index(n)
        runs = np.empty((n_runs, n, spec.n_loc))
        for l in range(spec.n_loc):
            rng = make_rng(spec.seed, label, l)
            z = sample_evolutionary_gp(rng, n, a_base, d0, d1, wp.delta[:, l], wp.rate[:, l], size=n_runs)
            runs[:, :, l] = spec.beta0 + m[doy, l] + lam[l] * wp.delta[:, l] + D[doy, l] * z
        scenarios[label] = ScenarioRuns(sid, runs, start, trajs[label])
    ens = ScenarioEnsemble(grid, scenarios, spec.partition(), spec.co2_baseline, source="synthetic")
    truth = {"spec": spec.to_json(), "mean_params": truth_mean.to_json(),
             "seasonal_mean": m.tolist(), "seasonal_scale": D[:, 0].tolist()}
    return ens, truth


def write_synthetic_fixture(spec: SyntheticSpec, out_dir) -> Path:
    """Write grids, CO2 tables, regions and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ens, truth = make_synthetic_ensemble(spec)
    entries = []
    for label, runs in ens.scenarios.items():
        files = []
        for r in range(runs.n_runs):
            path = out / f"{label}_r{r}.f64grid"
            write_grid_series(path, runs.runs[r], n_lat=spec.n_lat, n_lon=spec.n_lon, scenario=label,
                              kind=runs.scenario.kind, start_year=runs.start_year)
            files.append(path.name)
        entry = {"label": label, "kind": runs.scenario.kind, "runs": files}
        if not runs.scenario.is_baseline:
            write_co2_csv(out / f"{label}_co2.csv", runs.forcing)
            entry["co2"] = f"{label}_co2.csv"
        entries.append(entry)
    ens.regions.to_csv(out / "regions.csv")
    (out / "truth.json").write_text(json.dumps(truth))
    manifest = out / "manifest.json"
    write_manifest(manifest, ens.grid, entries, spec.co2_baseline, "regions.csv")
    return manifest
