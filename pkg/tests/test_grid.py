import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evoclim.grid import (BASELINE, DAYS_PER_YEAR, EnsembleError, ForcingTrajectory, GridFormatError,
                          GridSpec, RegionPartition, ScenarioId, day_of_year, doy_index, load_ensemble,
                          read_co2_csv, read_grid_series, write_co2_csv, write_grid_series,
                          write_manifest)

from conftest import small_ensemble


def test_zero_array_payload_and_sidecar(tmp_path):
    data, side = write_grid_series(tmp_path / "z", np.zeros((2, 3)))
    assert data.stat().st_size == 48
    meta = json.loads(side.read_text())
    assert (meta["n_time"], meta["n_loc"]) == (2, 3)


def test_first_value_is_little_endian_ieee(tmp_path):
    a = np.zeros((2, 2))
    a[0, 0] = 1.0
    data, _ = write_grid_series(tmp_path / "one.f64grid", a)
    raw = data.read_bytes()
    assert raw[:8] == bytes.fromhex("000000000000f03f")
    assert struct.unpack("<d", raw[:8])[0] == 1.0


def test_time_major_layout(tmp_path):
    a = np.arange(6, dtype=float).reshape(3, 2)
    data, _ = write_grid_series(tmp_path / "t", a)
    assert np.array_equal(np.fromfile(data, "<f8"), a.ravel())


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_is_bit_exact(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("rt") / "x.f64grid"
    write_grid_series(path, a, start_year=1979)
    back, hdr = read_grid_series(path)
    assert back.tobytes() == a.tobytes()
    assert hdr.start_year == 1979


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected_with_position(tmp_path, bad):
    a = np.zeros((4, 3))
    a[2, 1] = bad
    with pytest.raises(GridFormatError, match="time 2, location 1"):
        write_grid_series(tmp_path / "bad", a)


def test_size_mismatch_detected(tmp_path):
    data, side = write_grid_series(tmp_path / "s", np.zeros((4, 2)))
    meta = json.loads(side.read_text())
    meta["n_time"] = 5
    side.write_text(json.dumps(meta))
    with pytest.raises(GridFormatError, match="header says"):
        read_grid_series(data)


@given(st.integers(0, 10 ** 6))
def test_day_of_year_is_periodic(t):
    assert day_of_year(t + DAYS_PER_YEAR) == day_of_year(t)


def test_doy_index_offset():
    d = doy_index(400, start_doy=360)
    assert d[0] == 360 and d[5] == 0 and d.max() == 364


def test_partition_single_and_members():
    p = RegionPartition(np.array([0, 1, 0, 2]))
    assert p.ids == [0, 1, 2]
    assert np.array_equal(p.members(0), [0, 2])
    means = p.regional_mean(np.array([[1.0, 5.0, 3.0, 7.0]]))
    assert means[0][0] == 2.0 and means[2][0] == 7.0


def test_partition_csv_round_trip(tmp_path):
    p = RegionPartition(np.array([3, 3, 1, 0]))
    p.to_csv(tmp_path / "r.csv")
    assert np.array_equal(RegionPartition.from_csv(tmp_path / "r.csv", 4).region_of, p.region_of)


@pytest.mark.parametrize("rows, msg", [
    ("0,0\n0,1\n1,0\n", "listed twice"),
    ("0,0\n", "has no region"),
    ("0,0\n1,0\n5,0\n", "outside"),
])
def test_partition_csv_must_cover_once(tmp_path, rows, msg):
    f = tmp_path / "r.csv"
    f.write_text("location_index,region_id\n" + rows)
    with pytest.raises(EnsembleError, match=msg):
        RegionPartition.from_csv(f, 2)


def test_forcing_constant_and_step_interpolation():
    sid = ScenarioId("s")
    traj = ForcingTrajectory(sid, np.array([2000, 2001]), np.array([300.0, 600.0]), 300.0)
    ppm = traj.daily_ppm(1999, 3 * DAYS_PER_YEAR)
    assert np.all(ppm[:DAYS_PER_YEAR] == 300.0)
    assert np.all(ppm[DAYS_PER_YEAR:2 * DAYS_PER_YEAR] == 300.0)
    assert np.all(ppm[2 * DAYS_PER_YEAR:] == 600.0)
    const = ForcingTrajectory.constant(ScenarioId("b", BASELINE), 280.0)
    assert np.all(const.log_ratio(0, 10) == 0.0)


def test_co2_csv_round_trip(tmp_path):
    sid = ScenarioId("s")
    traj = ForcingTrajectory(sid, np.arange(1990, 1995), np.geomspace(350, 500, 5), 280.0)
    write_co2_csv(tmp_path / "c.csv", traj)
    back = read_co2_csv(tmp_path / "c.csv", sid, 280.0)
    assert np.array_equal(back.ppm, traj.ppm) and np.array_equal(back.years, traj.years)


def _write_fixture(tmp_path, ens, lengths=None):
    entries = []
    for label, runs in ens.scenarios.items():
        files = []
        for r in range(runs.n_runs):
            arr = runs.runs[r]
            if lengths and label in lengths:
                arr = arr[:lengths[label][r]]
            name = f"{label}_{r}.f64grid"
            write_grid_series(tmp_path / name, arr, n_lat=1, n_lon=ens.grid.n_loc, start_year=runs.start_year)
            files.append(name)
        e = {"label": label, "kind": runs.scenario.kind, "runs": files}
        if not runs.scenario.is_baseline:
            write_co2_csv(tmp_path / f"{label}.csv", runs.forcing)
            e["co2"] = f"{label}.csv"
        entries.append(e)
    write_manifest(tmp_path / "m.json", ens.grid, entries, ens.co2_baseline)
    return tmp_path / "m.json"


def test_load_ensemble_round_trip(tmp_path):
    ens = small_ensemble(n_years=2, n_loc=4, n_runs=2)
    back = load_ensemble(_write_fixture(tmp_path, ens))
    assert back.baseline.n_runs == 1 and back.scenarios["hist"].n_runs == 2
    assert back.baseline.n_time == 730 and back.grid.n_loc == 4
    for k in ens.scenarios:
        assert back.scenarios[k].runs.tobytes() == ens.scenarios[k].runs.tobytes()


def test_load_ensemble_rejects_length_mismatch(tmp_path):
    ens = small_ensemble(n_years=2, n_loc=2, n_runs=2)
    with pytest.raises(EnsembleError, match="length mismatch"):
        load_ensemble(_write_fixture(tmp_path, ens, {"hist": [730, 700]}))


def test_ensemble_requires_one_baseline():
    ens = small_ensemble()
    with pytest.raises(EnsembleError, match="baseline"):
        type(ens)(ens.grid, {"hist": ens.scenarios["hist"]}, ens.regions, 280.0)


def test_grid_spec_default_coordinates():
    g = GridSpec(2, 3)
    assert g.lat.shape == (6,) and g.index(1, 2) == 5
    assert np.all(np.abs(g.lat) < 90)
