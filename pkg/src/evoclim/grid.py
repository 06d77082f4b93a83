"""Gridded ensembles, forcing trajectories, regions and their on-disk formats.

Grid files are raw little-endian float64 in time-major layout (``[time][location]``)
with a JSON sidecar of the same stem.  An ensemble manifest is a JSON document that
lists scenarios, their realization files, a CO2 trajectory CSV per scenario and a
region CSV.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

DAYS_PER_YEAR = 365
BASELINE = "baseline-equilibrated"
TRANSIENT = "transient"
SCENARIO_KINDS = (BASELINE, TRANSIENT)

GRID_SUFFIX = ".f64grid"
SIDECAR_FIELDS = ("n_time", "n_loc", "n_lat", "n_lon", "scenario", "kind", "start_year")


class GridFormatError(ValueError):
    """A grid file or its sidecar is malformed."""


class EnsembleError(ValueError):
    """An ensemble violates one of its structural invariants."""


def day_of_year(t):
    """Day of year in 1..365 for a 1-based day index ``t`` (no leap years)."""
    return (np.asarray(t) - 1) % DAYS_PER_YEAR + 1


def doy_index(n_days: int, start_doy: int = 0) -> np.ndarray:
    """0-based day-of-year index for ``n_days`` consecutive days."""
    return (np.arange(n_days) + start_doy) % DAYS_PER_YEAR


@dataclass(frozen=True)
class ScenarioId:
    label: str
    kind: str = TRANSIENT

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise EnsembleError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")

    @property
    def is_baseline(self) -> bool:
        return self.kind == BASELINE


@dataclass(frozen=True)
class ForcingTrajectory:
    """Annual CO2 concentrations, stepped to daily values within each year.

    Days before the first tabulated year take the baseline concentration.  An empty
    table describes a scenario held at the baseline forever.
    """

    scenario: ScenarioId
    years: np.ndarray
    ppm: np.ndarray
    co2_baseline: float

    def __post_init__(self):
        years = np.asarray(self.years, dtype=np.int64).reshape(-1)
        ppm = np.asarray(self.ppm, dtype=np.float64).reshape(-1)
        if years.shape != ppm.shape:
            raise EnsembleError("CO2 years and ppm columns differ in length")
        if not self.co2_baseline > 0:
            raise EnsembleError("baseline CO2 must be positive")
        if np.any(~np.isfinite(ppm)) or np.any(ppm <= 0):
            raise EnsembleError(f"CO2 must be positive everywhere (scenario {self.scenario.label})")
        if years.size > 1 and np.any(np.diff(years) != 1):
            raise EnsembleError("CO2 trajectory must list consecutive years")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "ppm", ppm)

    @classmethod
    def constant(cls, scenario: ScenarioId, co2_baseline: float) -> "ForcingTrajectory":
        return cls(scenario, np.zeros(0, np.int64), np.zeros(0), co2_baseline)

    @property
    def first_year(self) -> int | None:
        return int(self.years[0]) if self.years.size else None

    @property
    def last_year(self) -> int | None:
        return int(self.years[-1]) if self.years.size else None

    def daily_ppm(self, start_year: int, n_days: int) -> np.ndarray:
        """Daily concentrations for ``n_days`` days beginning on day 1 of ``start_year``."""
        if not self.years.size:
            return np.full(n_days, float(self.co2_baseline))
        year = start_year + np.arange(n_days) // DAYS_PER_YEAR
        if n_days and year[-1] > self.last_year:
            raise EnsembleError(
                f"requested times extend to year {year[-1]}, beyond the {self.scenario.label} "
                f"trajectory (last year {self.last_year})")
        out = np.full(n_days, float(self.co2_baseline))
        inside = year >= self.first_year
        out[inside] = self.ppm[year[inside] - self.first_year]
        return out

    def log_ratio(self, start_year: int, n_days: int) -> np.ndarray:
        return np.log(self.daily_ppm(start_year, n_days) / self.co2_baseline)

    def to_dict(self) -> dict:
        return {"label": self.scenario.label, "kind": self.scenario.kind,
                "years": self.years.tolist(), "ppm": self.ppm.tolist(),
                "co2_baseline": float(self.co2_baseline)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForcingTrajectory":
        return cls(ScenarioId(d["label"], d.get("kind", TRANSIENT)), d["years"], d["ppm"],
                   d["co2_baseline"])


@dataclass(frozen=True)
class GridSpec:
    n_lat: int
    n_lon: int
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None

    def __post_init__(self):
        if self.n_lat < 1 or self.n_lon < 1:
            raise EnsembleError("grid needs at least one location")
        lat, lon = self.lat, self.lon
        if lat is None or lon is None:
            lat_c = -90 + 180 * (np.arange(self.n_lat) + 0.5) / self.n_lat
            lon_c = 360 * (np.arange(self.n_lon) + 0.5) / self.n_lon
            lat, lon = (a.reshape(-1) for a in np.meshgrid(lat_c, lon_c, indexing="ij"))
        lat = np.asarray(lat, float).reshape(-1)
        lon = np.asarray(lon, float).reshape(-1)
        if lat.size != self.n_loc or lon.size != self.n_loc:
            raise EnsembleError("per-location coordinates must have n_lat*n_lon entries")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @property
    def n_loc(self) -> int:
        return self.n_lat * self.n_lon

    def index(self, i_lat: int, i_lon: int) -> int:
        return i_lat * self.n_lon + i_lon


@dataclass(frozen=True)
class RegionPartition:
    """Total partition of locations into regions (``region_of[l]`` is the region id)."""

    region_of: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.region_of, dtype=np.int64).reshape(-1)
        if r.size == 0:
            raise EnsembleError("region partition is empty")
        object.__setattr__(self, "region_of", r)

    @classmethod
    def single(cls, n_loc: int) -> "RegionPartition":
        return cls(np.zeros(n_loc, np.int64))

    @property
    def n_loc(self) -> int:
        return self.region_of.size

    @property
    def ids(self) -> list[int]:
        return sorted(set(self.region_of.tolist()))

    @property
    def n_regions(self) -> int:
        return len(self.ids)

    def members(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.region_of == region)

    def regional_mean(self, values: np.ndarray) -> dict[int, np.ndarray]:
        """Unweighted average over the last (location) axis for each region."""
        return {r: values[..., self.members(r)].mean(axis=-1) for r in self.ids}

    @classmethod
    def from_csv(cls, path, n_loc: int) -> "RegionPartition":
        seen = np.full(n_loc, -1, np.int64)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                loc, reg = int(row["location_index"]), int(row["region_id"])
                if not 0 <= loc < n_loc:
                    raise EnsembleError(f"region file: location {loc} outside 0..{n_loc - 1}")
                if seen[loc] >= 0:
                    raise EnsembleError(f"region file: location {loc} listed twice")
                seen[loc] = reg
        missing = np.flatnonzero(seen < 0)
        if missing.size:
            raise EnsembleError(f"region file: location {missing[0]} has no region")
        return cls(seen)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["location_index", "region_id"])
            for loc, reg in enumerate(self.region_of):
                w.writerow([loc, int(reg)])


# --------------------------------------------------------------------------- grid files

@dataclass
class GridHeader:
    n_time: int
    n_loc: int
    n_lat: int = 1
    n_lon: int = 0
    scenario: str = ""
    kind: str = ""
    start_year: int = 0

    def __post_init__(self):
        if not self.n_lon:
            self.n_lon = self.n_loc // max(self.n_lat, 1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in SIDECAR_FIELDS}


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        p = p.with_suffix(GRID_SUFFIX)
    elif p.suffix != GRID_SUFFIX:
        p = p.with_name(p.name + GRID_SUFFIX)
    return p, p.with_suffix(".json")


def write_grid_series(path, array, header: GridHeader | None = None, **fields) -> tuple[Path, Path]:
    """Write a ``[time][location]`` array and its JSON sidecar; returns both paths."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise GridFormatError("grid series must be 2-D [time][location]")
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        t, l = bad[0]
        raise GridFormatError(f"non-finite value at time {t}, location {l}")
    if header is None:
        header = GridHeader(n_time=a.shape[0], n_loc=a.shape[1], **fields)
    if (header.n_time, header.n_loc) != a.shape:
        raise GridFormatError(f"header dims {(header.n_time, header.n_loc)} != array shape {a.shape}")
    data_path, side_path = _paths(path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(a, dtype="<f8").tofile(data_path)
    side_path.write_text(json.dumps(header.to_dict(), indent=1))
    return data_path, side_path


def read_grid_header(path) -> GridHeader:
    _, side_path = _paths(path)
    try:
        meta = json.loads(side_path.read_text())
    except FileNotFoundError:
        raise GridFormatError(f"missing sidecar {side_path}") from None
    missing = [k for k in ("n_time", "n_loc") if k not in meta]
    if missing:
        raise GridFormatError(f"{side_path}: missing fields {missing}")
    return GridHeader(**{k: meta[k] for k in SIDECAR_FIELDS if k in meta})


def read_grid_series(path) -> tuple[np.ndarray, GridHeader]:
    header = read_grid_header(path)
    data_path, _ = _paths(path)
    if not data_path.exists():
        raise GridFormatError(f"missing grid file {data_path}")
    raw = np.fromfile(data_path, dtype="<f8")
    if raw.size != header.n_time * header.n_loc:
        raise GridFormatError(
            f"{data_path}: {raw.size} values on disk, header says {header.n_time}x{header.n_loc}")
    return raw.reshape(header.n_time, header.n_loc).astype(np.float64), header


# --------------------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class ScenarioRuns:
    scenario: ScenarioId
    runs: np.ndarray          # (R, N, L)
    start_year: int
    forcing: ForcingTrajectory

    def __post_init__(self):
        runs = np.asarray(self.runs, dtype=np.float64)
        if runs.ndim != 3:
            raise EnsembleError("runs must be shaped (realization, time, location)")
        runs = runs.copy() if runs.flags.writeable else runs
        runs.setflags(write=False)
        object.__setattr__(self, "runs", runs)

    @property
    def label(self) -> str:
        return self.scenario.label

    @property
    def n_runs(self) -> int:
        return self.runs.shape[0]

    @property
    def n_time(self) -> int:
        return self.runs.shape[1]


@dataclass(frozen=True)
class ScenarioEnsemble:
    grid: GridSpec
    scenarios: dict[str, ScenarioRuns]
    regions: RegionPartition
    co2_baseline: float
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        base = [s for s in self.scenarios.values() if s.scenario.is_baseline]
        if len(base) != 1:
            raise EnsembleError(f"ensemble needs exactly one baseline scenario, found {len(base)}")
        if base[0].n_runs != 1:
            raise EnsembleError("baseline scenario must have exactly one run")
        for s in self.scenarios.values():
            if s.runs.shape[2] != self.grid.n_loc:
                raise EnsembleError(f"scenario {s.label}: {s.runs.shape[2]} locations, grid has {self.grid.n_loc}")
            bad = np.argwhere(~np.isfinite(s.runs))
            if bad.size:
                r, t, l = bad[0]
                raise EnsembleError(f"scenario {s.label} run {r}: non-finite value at time {t}, location {l}")
        if self.regions.n_loc != self.grid.n_loc:
            raise EnsembleError("region partition does not cover the grid")

    @property
    def baseline(self) -> ScenarioRuns:
        return next(s for s in self.scenarios.values() if s.scenario.is_baseline)

    @property
    def transient(self) -> list[ScenarioRuns]:
        return [s for s in self.scenarios.values() if not s.scenario.is_baseline]

    def trajectories(self) -> dict[str, ForcingTrajectory]:
        return {k: s.forcing for k, s in self.scenarios.items()}


def read_co2_csv(path, scenario: ScenarioId, co2_baseline: float) -> ForcingTrajectory:
    years, ppm = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            years.append(int(row["year"]))
            ppm.append(float(row["ppm"]))
    return ForcingTrajectory(scenario, np.array(years), np.array(ppm), co2_baseline)


def write_co2_csv(path, traj: ForcingTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "ppm"])
        for y, p in zip(traj.years, traj.ppm):
            w.writerow([int(y), repr(float(p))])


def load_ensemble(manifest_path) -> ScenarioEnsemble:
    """Load and validate an ensemble manifest (paths resolve relative to the manifest)."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    meta = json.loads(manifest_path.read_text())
    n_lat, n_lon = int(meta["n_lat"]), int(meta["n_lon"])
    grid = GridSpec(n_lat, n_lon, meta.get("lat"), meta.get("lon"))
    co2_b = float(meta["co2_baseline"])

    scenarios: dict[str, ScenarioRuns] = {}
    for entry in meta["scenarios"]:
        sid = ScenarioId(entry["label"], entry.get("kind", TRANSIENT))
        arrays, start_year = [], None
        for rel in entry["runs"]:
            arr, hdr = read_grid_series(root / rel)
            if hdr.n_loc != grid.n_loc or (hdr.n_lat, hdr.n_lon) != (n_lat, n_lon):
                raise EnsembleError(f"{rel}: grid {hdr.n_lat}x{hdr.n_lon} does not match manifest {n_lat}x{n_lon}")
            if arrays and arr.shape[0] != arrays[0].shape[0]:
                raise EnsembleError(f"scenario {sid.label}: run length mismatch "
                                    f"({arr.shape[0]} vs {arrays[0].shape[0]})")
            start_year = hdr.start_year if start_year is None else start_year
            arrays.append(arr)
        if not arrays:
            raise EnsembleError(f"scenario {sid.label} lists no runs")
        if entry.get("co2"):
            traj = read_co2_csv(root / entry["co2"], sid, co2_b)
        elif sid.is_baseline:
            traj = ForcingTrajectory.constant(sid, co2_b)
        else:
            raise EnsembleError(f"transient scenario {sid.label} needs a CO2 trajectory")
        scenarios[sid.label] = ScenarioRuns(sid, np.stack(arrays), int(start_year), traj)

    if meta.get("regions"):
        regions = RegionPartition.from_csv(root / meta["regions"], grid.n_loc)
    else:
        regions = RegionPartition.single(grid.n_loc)
    return ScenarioEnsemble(grid, scenarios, regions, co2_b, source=manifest_path)


def write_manifest(path, grid: GridSpec, scenarios: Sequence[Mapping], co2_baseline: float,
                   regions: str | None = None) -> Path:
    """Write a manifest; ``scenarios`` entries carry label, kind, runs and optional co2 path."""
    path = Path(path)
    doc = {"n_lat": grid.n_lat, "n_lon": grid.n_lon,
           "lat": grid.lat.tolist(), "lon": grid.lon.tolist(),
           "co2_baseline": float(co2_baseline), "regions": regions,
           "scenarios": [dict(s) for s in scenarios]}
    path.write_text(json.dumps(doc, indent=1))
    return path
