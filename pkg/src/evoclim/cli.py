"""Command-line pipeline: synth, fit-seasonal, fit-mean, fit-spectra, simulate, diagnose, emit-plot-data.

Every run writes a JSON report next to its main output (or to ``--report``) with package
versions, the resolved configuration, SHA-256 checksums of outputs and stage timings.
Exit status is 0 on success, 1 on numerical failure and 2 on configuration or input errors.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .grid import (DAYS_PER_YEAR, EnsembleError, GridFormatError, GridSpec, RegionPartition, load_ensemble,
                   read_grid_series, write_grid_series)
from .mean_emulator import (EMULATOR_HARMONICS, MeanEmulatorParams, UnidentifiableError,
                            fit_mean_emulator, fit_observation_trend, local_mean_change,
                            pattern_scaling_from_ensemble, scenario_means, warming_path)
from .preprocess import (HALF_WINDOW, OBS_HARMONICS, DegenerateVarianceError, SeasonalModel,
                         deseasonalize, fit_seasonal)
from .simulation import TAYLOR_ORDER, ResidueError, SolverError, TaylorAccuracyError, simulate
from .spectral.diagnostics import coherence_spectrum, deviance, predictive_loglik
from .spectral.model import SpectralChangeModel, fit_spectral_model, predict_log_rho, whittle_data_from_ensemble
from .spectral.smoothing import BANDWIDTH_GRID, TRANSITION_GRID, BandwidthParams, candidate_grid
from .spectral.whittle import ConvergenceError, UnidentifiableDeltaError
from .synthetic import SyntheticSpec, write_synthetic_fixture

log = logging.getLogger("evoclim")

NUMERICAL_ERRORS = (SolverError, TaylorAccuracyError, ResidueError, ConvergenceError,
                    UnidentifiableError, UnidentifiableDeltaError, DegenerateVarianceError,
                    np.linalg.LinAlgError, FloatingPointError, ArithmeticError)
CONFIG_ERRORS = (EnsembleError, GridFormatError, FileNotFoundError, KeyError, json.JSONDecodeError)

PLOT_KINDS = ("rho-map", "rho-curves", "densities", "coherence")
PLOT_COLUMNS = {
    "rho-map": ["location", "lat", "lon", "year", "rho", "se_log_rho"],
    "rho-curves": ["location", "year", "omega", "period_days", "rho", "rho_lower", "rho_upper"],
    "densities": ["series", "location", "temperature", "density"],
    "coherence": ["block", "omega", "period_days", "coherence"],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one invocation; recorded verbatim in the run report."""

    subcommand: str
    inputs: dict = field(default_factory=dict)
    output: str = ""
    harmonics: int = OBS_HARMONICS
    half_window: int = HALF_WINDOW
    block_years: int = 10
    taylor_order: int = TAYLOR_ORDER
    cv_bandwidths: tuple = BANDWIDTH_GRID
    cv_transitions: tuple = TRANSITION_GRID
    threads: int = 1
    log_level: str = "WARNING"
    seed: int | None = None
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not 1 <= self.harmonics <= 182:
            raise ConfigError("--harmonics must be between 1 and 182")
        if not 0 <= self.half_window < 182:
            raise ConfigError("--half-window must be between 0 and 181")
        if self.block_years < 1:
            raise ConfigError("--block-years must be positive")
        if not 1 <= self.taylor_order <= 40:
            raise ConfigError("--taylor-order must be between 1 and 40")
        if self.threads < 1:
            raise ConfigError("--threads must be positive")
        if any(b <= 0 for b in self.cv_bandwidths) or any(not 0 < p < 1 for p in self.cv_transitions):
            raise ConfigError("CV grids need positive bandwidths and transitions in (0, 1)")


# --------------------------------------------------------------------------- helpers

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Report:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.outputs: list[Path] = []
        self.timings: dict[str, float] = {}
        self.extra: dict = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - t0

    def add(self, *paths) -> None:
        self.outputs.extend(Path(p) for p in paths)

    def write(self, path) -> None:
        doc = {"command": self.cfg.subcommand,
               "versions": {"evoclim": __version__, "python": platform.python_version(),
                            "numpy": np.__version__, "scipy": scipy.__version__},
               "config": asdict(self.cfg),
               "checksums": {str(p): sha256(p) for p in self.outputs if p.exists()},
               "timings": self.timings, **self.extra}
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(doc, indent=1, default=str))


def parse_years(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"year range must look like 1979:2010, got {text!r}") from None
    if b < a:
        raise ConfigError(f"year range {text!r} is reversed")
    return a, b


def parse_bandwidth(text: str | None):
    if not text:
        return None
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 1:
        return BandwidthParams.fixed(vals[0])
    if len(vals) == 3:
        return BandwidthParams(*vals)
    raise ConfigError("--bandwidth takes m or m0,m1,p")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _slice_years(arr: np.ndarray, start_year: int, years: tuple[int, int]) -> np.ndarray:
    a = (years[0] - start_year) * DAYS_PER_YEAR
    b = (years[1] + 1 - start_year) * DAYS_PER_YEAR
    if a < 0 or b > arr.shape[0]:
        raise ConfigError(f"years {years[0]}:{years[1]} fall outside the series "
                          f"({start_year} onward, {arr.shape[0]} days)")
    return arr[a:b]


def _gcm_seasonal(ensemble, cfg: RunConfig, path=None) -> SeasonalModel:
    if path:
        arr, _ = read_grid_series(path)
        return SeasonalModel.from_grid(arr)
    return fit_seasonal(ensemble.baseline.runs[0], cfg.harmonics, cfg.half_window)


def _warmings(params: MeanEmulatorParams, ensemble) -> dict:
    out = {}
    for runs in ensemble.transient:
        wp = warming_path(params, runs.forcing, runs.start_year, runs.n_time)
        out[runs.label] = wp.for_locations(params.partition.region_of)
    return out


def _cv_grid(cfg: RunConfig):
    return candidate_grid(cfg.cv_bandwidths, cfg.cv_transitions)


# --------------------------------------------------------------------------- commands

def cmd_synth(args, cfg: RunConfig, rep: Report) -> Path:
    spec = SyntheticSpec.from_json(json.loads(Path(args.spec).read_text()))
    if cfg.seed is not None:
        spec.seed = cfg.seed
    cfg.seed = spec.seed
    with rep.stage("synth"):
        manifest = write_synthetic_fixture(spec, args.out_dir)
    rep.add(*sorted(p for p in Path(args.out_dir).iterdir() if p.is_file() and not p.name.endswith(".report.json")))
    return manifest


def cmd_fit_seasonal(args, cfg: RunConfig, rep: Report) -> Path:
    src = Path(args.input)
    with rep.stage("load"):
        if src.suffix == ".json" and "scenarios" in json.loads(src.read_text()):
            series = load_ensemble(src).baseline.runs[0]
            start_year = None
        else:
            series, hdr = read_grid_series(src)
            start_year = hdr.start_year
    trend = None
    if args.mean_params and start_year is not None:
        params = MeanEmulatorParams.load(args.mean_params)
        traj = params.trajectory(args.source_scenario)
        phi = [params.region_params(l).phi for l in range(series.shape[1])]
        trend = fit_observation_trend(series, traj, start_year, phi)
    with rep.stage("fit"):
        model = fit_seasonal(series, cfg.harmonics, cfg.half_window, trend=trend)
    out = Path(args.out)
    data, side = write_grid_series(out, model.to_grid(), n_lat=1, n_lon=model.n_loc, kind="seasonal",
                                   scenario=src.stem, start_year=0)
    rep.add(data, side)
    return data


def cmd_fit_mean(args, cfg: RunConfig, rep: Report) -> Path:
    with rep.stage("load"):
        ens = load_ensemble(args.ensemble)
    part = RegionPartition.from_csv(args.regions, ens.grid.n_loc) if args.regions else ens.regions
    with rep.stage("fit"):
        scaling = pattern_scaling_from_ensemble(ens, part)
        params = fit_mean_emulator(scenario_means(ens, part), part, scaling, cfg.harmonics)
        params = MeanEmulatorParams(params.regions, scaling, part, ens.trajectories())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params.save(out)
    rep.add(out)
    rep.extra["phi"] = {str(r): p.phi for r, p in params.regions.items()}
    return out


def _fit_model(ens, params, seasonal, cfg, bandwidth, exclude=(), with_rate=True):
    block = cfg.block_years * DAYS_PER_YEAR
    data = whittle_data_from_ensemble(ens, seasonal, _warmings(params, ens), block, exclude)
    model = fit_spectral_model(data, params.partition, bandwidth, with_rate, _cv_grid(cfg))
    return model, data


def cmd_fit_spectra(args, cfg: RunConfig, rep: Report) -> Path:
    with rep.stage("load"):
        ens = load_ensemble(args.ensemble)
        params = MeanEmulatorParams.load(args.mean_params)
        seasonal = _gcm_seasonal(ens, cfg, args.seasonal)
    exclude = tuple(args.exclude or ())
    with rep.stage("fit"):
        model, _ = _fit_model(ens, params, seasonal, cfg, parse_bandwidth(args.bandwidth), exclude,
                              not args.reduced)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    rep.add(out)
    rep.extra["bandwidths"] = {str(r): [b.to_list() for b in pair] for r, pair in model.bandwidths.items()}
    return out


def cmd_simulate(args, cfg: RunConfig, rep: Report) -> Path:
    obs_years = parse_years(args.obs_years)
    target_years = parse_years(args.target_years)
    if obs_years[1] - obs_years[0] != target_years[1] - target_years[0]:
        raise ConfigError("observation and target periods must span the same number of years")
    with rep.stage("load"):
        obs_all, hdr = read_grid_series(args.obs)
        seas_arr, _ = read_grid_series(args.seasonal)
        seasonal = SeasonalModel.from_grid(seas_arr)
        model = SpectralChangeModel.load(args.spectra)
        params = MeanEmulatorParams.load(args.mean_params)
    obs = _slice_years(obs_all, hdr.start_year, obs_years)
    n, L = obs.shape
    if model.n_loc != L or params.n_loc != L or seasonal.n_loc != L:
        raise ConfigError("observations, seasonal model, spectra and mean parameters disagree on locations")
    src_traj = params.trajectory(args.source_scenario)
    tgt_traj = params.trajectory(args.scenario)
    with rep.stage("trend"):
        phi = [params.region_params(l).phi for l in range(L)]
        trend_full = fit_observation_trend(obs_all, src_traj, hdr.start_year, phi)
        trend = _slice_years(trend_full, hdr.start_year, obs_years)
        change = (local_mean_change(params, tgt_traj, target_years[0], n)
                  - local_mean_change(params, src_traj, obs_years[0], n))
        region_of = params.partition.region_of
        source = warming_path(params, src_traj, obs_years[0], n).for_locations(region_of)
        target = warming_path(params, tgt_traj, target_years[0], n).for_locations(region_of)
    with rep.stage("transform"):
        if cfg.threads > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                sim = simulate(obs, seasonal, trend, model, source, target, change, cfg.taylor_order,
                               executor=pool)
        else:
            sim = simulate(obs, seasonal, trend, model, source, target, change, cfg.taylor_order)
    data, side = write_grid_series(args.out, sim, n_lat=hdr.n_lat, n_lon=hdr.n_lon, scenario=args.scenario,
                                   kind="simulation", start_year=target_years[0])
    rep.add(data, side)
    return data


def cmd_diagnose(args, cfg: RunConfig, rep: Report) -> Path:
    if not args.deviance and not args.holdout:
        raise ConfigError("diagnose needs --deviance or --holdout SCENARIO")
    with rep.stage("load"):
        ens = load_ensemble(args.ensemble)
        params = MeanEmulatorParams.load(args.mean_params)
        seasonal = _gcm_seasonal(ens, cfg, args.seasonal)
    block = cfg.block_years * DAYS_PER_YEAR
    if args.deviance:
        if not args.spectra:
            raise ConfigError("--deviance needs --spectra")
        model = SpectralChangeModel.load(args.spectra)
        if model.block != block:
            raise ConfigError(f"model block {model.block} days differs from --block-years {cfg.block_years}")
        with rep.stage("deviance"):
            data = whittle_data_from_ensemble(ens, seasonal, _warmings(params, ens), block)
            values = deviance(model, data)
    else:
        if args.holdout not in {r.label for r in ens.transient}:
            raise ConfigError(f"unknown holdout scenario {args.holdout!r}")
        bw = parse_bandwidth(args.bandwidth)
        with rep.stage("holdout"):
            warm = _warmings(params, ens)
            data = whittle_data_from_ensemble(ens, seasonal, warm, block)
            train = data.without(args.holdout)
            test = data.only(args.holdout)
            full = fit_spectral_model(train, params.partition, bw, True, _cv_grid(cfg))
            reduced = fit_spectral_model(train, params.partition, bw, False, _cv_grid(cfg))
            values = predictive_loglik(full, test) - predictive_loglik(reduced, test)
    out = write_csv(args.out, ["location", "value"], ((l, float(v)) for l, v in enumerate(values)))
    rep.add(out)
    return out


def cmd_emit_plot_data(args, cfg: RunConfig, rep: Report) -> Path:
    kind = args.kind
    rows = []
    if kind in ("rho-map", "rho-curves"):
        if not (args.spectra and args.mean_params and args.scenario):
            raise ConfigError(f"{kind} needs --spectra, --mean-params and --scenario")
        model = SpectralChangeModel.load(args.spectra)
        params = MeanEmulatorParams.load(args.mean_params)
        traj = params.trajectory(args.scenario)
        years = [int(y) for y in str(args.years).split(",")] if args.years else [traj.first_year or 0]
        locs = range(model.n_loc) if args.location is None else [args.location]
        first = min(years)
        wp = warming_path(params, traj, first, (max(years) - first + 1) * DAYS_PER_YEAR)
        wp = wp.for_locations(params.partition.region_of)
        t = [(y - first) * DAYS_PER_YEAR + (DAYS_PER_YEAR - 1) / 2 for y in years]
        n_omega = args.n_omega
        omega = np.linspace(0, np.pi, n_omega)
        lr, se = predict_log_rho(model, wp, t, omega)
        if kind == "rho-curves":
            for k, y in enumerate(years):
                for l in locs:
                    for j, w in enumerate(omega):
                        period = 2 * np.pi / w if w > 0 else float("inf")
                        rows.append((l, y, w, period, np.exp(lr[k, l, j]), np.exp(lr[k, l, j] - 2 * se[k, l, j]),
                                     np.exp(lr[k, l, j] + 2 * se[k, l, j])))
        else:
            lo, hi = (float(v) for v in args.band_days.split(":"))
            band = (omega >= 2 * np.pi / hi) & (omega <= 2 * np.pi / lo)
            if not np.any(band):
                raise ConfigError("--band-days selects no frequencies")
            if args.ensemble:
                g = load_ensemble(args.ensemble).grid
            else:
                g = GridSpec(1, model.n_loc)
            for k, y in enumerate(years):
                for l in locs:
                    rows.append((l, g.lat[l], g.lon[l], y, float(np.exp(np.mean(lr[k, l, band]))),
                                 float(np.mean(se[k, l, band]))))
    elif kind == "densities":
        from scipy.stats import gaussian_kde
        if not args.grids:
            raise ConfigError("densities needs --grids")
        loc = args.location or 0
        for path in args.grids:
            arr, _ = read_grid_series(path)
            x = arr[:, loc]
            kde = gaussian_kde(x)
            xs = np.linspace(x.min(), x.max(), args.n_omega)
            rows.extend((Path(path).stem, loc, v, d) for v, d in zip(xs, kde(xs)))
    elif kind == "coherence":
        if not (args.grids and args.seasonal and args.pair):
            raise ConfigError("coherence needs --grids, --seasonal and --pair A,B")
        a, b = (int(v) for v in args.pair.split(","))
        arr, _ = read_grid_series(args.grids[0])
        seas = SeasonalModel.from_grid(read_grid_series(args.seasonal)[0])
        x = deseasonalize(arr, seas)
        block = cfg.block_years * DAYS_PER_YEAR
        for bidx in range(x.shape[0] // block):
            seg = x[bidx * block:(bidx + 1) * block]
            seg = seg - seg.mean(axis=0)
            coh = coherence_spectrum(seg[:, a], seg[:, b], args.half_width)
            w = 2 * np.pi * np.arange(coh.size) / block
            rows.extend((bidx, wj, 2 * np.pi / wj if wj > 0 else float("inf"), c) for wj, c in zip(w, coh))
    out = write_csv(args.out, PLOT_COLUMNS[kind], rows)
    rep.add(out)
    return out


COMMANDS = {"synth": cmd_synth, "fit-seasonal": cmd_fit_seasonal, "fit-mean": cmd_fit_mean,
            "fit-spectra": cmd_fit_spectra, "simulate": cmd_simulate, "diagnose": cmd_diagnose,
            "emit-plot-data": cmd_emit_plot_data}


# --------------------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads (env TS_THREADS overrides)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--report", help="run report path (default: <out>.report.json)")
    common.add_argument("--seed", type=int, help="seed for every random draw")

    p = argparse.ArgumentParser(prog="evoclim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic ensemble fixture")
    s.add_argument("--spec", required=True, help="JSON synthetic spec")
    s.add_argument("--out-dir", required=True)

    s = sub.add_parser("fit-seasonal", parents=[common], help="fit mean and variance seasonal cycles")
    s.add_argument("--input", required=True, help=".f64grid series or ensemble manifest (uses the baseline run)")
    s.add_argument("--harmonics", type=int, default=OBS_HARMONICS)
    s.add_argument("--half-window", type=int, default=HALF_WINDOW)
    s.add_argument("--mean-params", help="remove the forced trend of an observed series first")
    s.add_argument("--source-scenario", default="historical")
    s.add_argument("--out", required=True, help="output .f64grid: 365 mean rows, then 365 scale rows")

    s = sub.add_parser("fit-mean", parents=[common], help="fit the regional mean emulator and pattern scaling")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--regions", help="CSV location_index,region_id (default: manifest regions)")
    s.add_argument("--harmonics", type=int, default=EMULATOR_HARMONICS)
    s.add_argument("--out", required=True)

    s = sub.add_parser("fit-spectra", parents=[common], help="fit the covariance-change model")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--mean-params", required=True)
    s.add_argument("--seasonal", help="GCM seasonal grid (default: fitted to the baseline run)")
    s.add_argument("--harmonics", type=int, default=OBS_HARMONICS)
    s.add_argument("--half-window", type=int, default=HALF_WINDOW)
    s.add_argument("--block-years", type=int, default=10)
    s.add_argument("--bandwidth", help="fixed kernel: m or m0,m1,p (default: cross-validated)")
    s.add_argument("--cv-bandwidths", help="comma-separated half-width grid")
    s.add_argument("--cv-transitions", help="comma-separated transition grid")
    s.add_argument("--exclude", action="append", help="leave a scenario out (repeatable)")
    s.add_argument("--reduced", action="store_true", help="fit without the warming-rate term")
    s.add_argument("--out", required=True)

    s = sub.add_parser("simulate", parents=[common], help="transform observations toward a scenario")
    s.add_argument("--obs", required=True)
    s.add_argument("--seasonal", required=True, help="observational seasonal grid from fit-seasonal")
    s.add_argument("--spectra", required=True)
    s.add_argument("--mean-params", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--source-scenario", default="historical")
    s.add_argument("--obs-years", required=True, help="e.g. 1979:2010")
    s.add_argument("--target-years", required=True, help="e.g. 2069:2100")
    s.add_argument("--taylor-order", type=int, default=TAYLOR_ORDER)
    s.add_argument("--out", required=True)

    s = sub.add_parser("diagnose", parents=[common], help="deviance or hold-one-scenario-out tables")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--mean-params", required=True)
    s.add_argument("--spectra", help="fitted model (for --deviance)")
    s.add_argument("--seasonal")
    s.add_argument("--harmonics", type=int, default=OBS_HARMONICS)
    s.add_argument("--half-window", type=int, default=HALF_WINDOW)
    s.add_argument("--block-years", type=int, default=10)
    s.add_argument("--bandwidth")
    s.add_argument("--cv-bandwidths")
    s.add_argument("--cv-transitions")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--deviance", action="store_true", help="CSV location,deviance")
    g.add_argument("--holdout", metavar="SCENARIO",
                   help="CSV location,value: predictive log-likelihood of full minus reduced model")
    s.add_argument("--out", required=True)

    s = sub.add_parser("emit-plot-data", parents=[common], help="tidy CSV tables for plotting",
                       description="Columns: " + "; ".join(f"{k}: {','.join(v)}" for k, v in PLOT_COLUMNS.items()))
    s.add_argument("--kind", required=True, choices=PLOT_KINDS)
    s.add_argument("--spectra")
    s.add_argument("--mean-params")
    s.add_argument("--ensemble", help="manifest supplying coordinates for rho-map")
    s.add_argument("--scenario")
    s.add_argument("--years", help="comma-separated years")
    s.add_argument("--location", type=int)
    s.add_argument("--n-omega", type=int, default=200)
    s.add_argument("--band-days", default="2:10", help="period band for rho-map, in days lo:hi")
    s.add_argument("--grids", nargs="+")
    s.add_argument("--seasonal")
    s.add_argument("--pair", help="two location indices for coherence, A,B")
    s.add_argument("--block-years", type=int, default=10)
    s.add_argument("--half-width", type=int, default=20)
    s.add_argument("--out", required=True)
    return p


def make_config(args) -> RunConfig:
    skip = {"subcommand", "threads", "log_level", "seed", "report", "out", "out_dir", "harmonics",
            "half_window", "block_years", "taylor_order", "cv_bandwidths", "cv_transitions"}
    inputs = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    threads = int(os.environ.get("TS_THREADS", args.threads))
    cfg = RunConfig(subcommand=args.subcommand, inputs=inputs,
                    output=str(getattr(args, "out", None) or getattr(args, "out_dir", "")),
                    threads=threads, log_level=args.log_level, seed=args.seed)
    for name in ("harmonics", "half_window", "block_years", "taylor_order"):
        if getattr(args, name, None) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "cv_bandwidths", None):
        cfg.cv_bandwidths = tuple(float(v) for v in args.cv_bandwidths.split(","))
    if getattr(args, "cv_transitions", None):
        cfg.cv_transitions = tuple(float(v) for v in args.cv_transitions.split(","))
    cfg.validate()
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        rep = Report(cfg)
        out = COMMANDS[args.subcommand](args, cfg, rep)
        report = args.report or (Path(args.out_dir) / "synth.report.json" if args.subcommand == "synth"
                                 else Path(str(out) + ".report.json"))
        rep.write(report)
        return 0
    except NUMERICAL_ERRORS as exc:
        print(f"evoclim: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"evoclim: configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"evoclim: numerical failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
