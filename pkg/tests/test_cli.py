import csv
import json

import numpy as np
import pytest

from evoclim.cli import PLOT_COLUMNS, RunConfig, ConfigError, run
from evoclim.grid import DAYS_PER_YEAR, read_grid_series
from evoclim.mean_emulator import MeanEmulatorParams, local_mean_change, warming_path
from evoclim.spectral import SpectralChangeModel, predict_log_rho

SPEC = {"n_lat": 1, "n_lon": 2, "seed": 4, "baseline_years": 30,
        "scenarios": [{"label": "historical", "n_runs": 3, "start_year": 1960, "n_years": 20,
                       "co2_start": 300.0, "co2_end": 390.0},
                      {"label": "high", "n_runs": 3, "start_year": 2000, "n_years": 20,
                       "co2_start": 400.0, "co2_end": 900.0}]}
FAST = ["--block-years", "5", "--cv-bandwidths", "25,50", "--cv-transitions", "0.5"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(SPEC))
    fx = root / "fx"
    assert run(["synth", "--spec", str(root / "spec.json"), "--out-dir", str(fx)]) == 0
    man = str(fx / "manifest.json")
    assert run(["fit-mean", "--ensemble", man, "--out", str(root / "mean.json")]) == 0
    assert run(["fit-spectra", "--ensemble", man, "--mean-params", str(root / "mean.json"),
                "--out", str(root / "model.bin"), *FAST]) == 0
    return root, man


def test_synth_report_lists_checksums(pipeline):
    root, _ = pipeline
    rep = json.loads((root / "fx" / "synth.report.json").read_text())
    assert rep["command"] == "synth" and rep["config"]["seed"] == 4
    assert any(k.endswith("manifest.json") for k in rep["checksums"])
    assert set(rep["versions"]) >= {"numpy", "scipy", "python", "evoclim"}


def test_deviance_table_has_one_row_per_location(pipeline):
    root, man = pipeline
    out = root / "dev.csv"
    assert run(["diagnose", "--ensemble", man, "--mean-params", str(root / "mean.json"),
                "--spectra", str(root / "model.bin"), "--deviance", "--block-years", "5",
                "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["location", "value"] and len(rows) == 3
    assert all(float(r[1]) >= 0 for r in rows[1:])


def test_holdout_table(pipeline):
    root, man = pipeline
    out = root / "ho.csv"
    assert run(["diagnose", "--ensemble", man, "--mean-params", str(root / "mean.json"),
                "--holdout", "high", "--bandwidth", "25", "--block-years", "5", "--out", str(out)]) == 0
    assert all(np.isfinite(float(r[1])) for r in _rows(out)[1:])


def test_unknown_flag_exits_two_with_usage(capsys):
    assert run(["fit-mean", "--no-such-flag"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_input_exits_two(tmp_path):
    assert run(["fit-mean", "--ensemble", str(tmp_path / "none.json"), "--out", str(tmp_path / "m.json")]) == 2


def test_bad_knob_exits_two(pipeline, tmp_path):
    _, man = pipeline
    assert run(["fit-seasonal", "--input", man, "--harmonics", "0", "--out", str(tmp_path / "s")]) == 2


def test_numerical_failure_exits_one(tmp_path):
    spec = dict(SPEC, scenarios=[])
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    assert run(["synth", "--spec", str(tmp_path / "spec.json"), "--out-dir", str(tmp_path / "fx")]) == 0
    assert run(["fit-mean", "--ensemble", str(tmp_path / "fx" / "manifest.json"),
                "--out", str(tmp_path / "m.json")]) == 1


def test_run_config_validation():
    RunConfig("fit-spectra").validate()
    with pytest.raises(ConfigError):
        RunConfig("simulate", taylor_order=0).validate()


def test_rerun_is_bit_stable(pipeline, tmp_path):
    root, man = pipeline
    outs = []
    for k in range(2):
        out = tmp_path / f"m{k}.bin"
        assert run(["fit-spectra", "--ensemble", man, "--mean-params", str(root / "mean.json"),
                    "--out", str(out), *FAST]) == 0
        rep = json.loads((tmp_path / f"m{k}.bin.report.json").read_text())
        outs.append(rep["checksums"][str(out)])
    assert outs[0] == outs[1]


def test_threads_env_overrides_flag(pipeline, tmp_path, monkeypatch):
    root, man = pipeline
    monkeypatch.setenv("TS_THREADS", "3")
    out = tmp_path / "m.json"
    assert run(["fit-mean", "--ensemble", man, "--threads", "1", "--out", str(out)]) == 0
    assert json.loads((tmp_path / "m.json.report.json").read_text())["config"]["threads"] == 3


def test_rho_curves_baseline_is_one(pipeline, tmp_path):
    root, _ = pipeline
    out = tmp_path / "c.csv"
    assert run(["emit-plot-data", "--kind", "rho-curves", "--spectra", str(root / "model.bin"),
                "--mean-params", str(root / "mean.json"), "--scenario", "baseline",
                "--years", "1000,1010", "--n-omega", "9", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == PLOT_COLUMNS["rho-curves"]
    assert all(float(r[4]) == 1.0 for r in rows[1:])


def test_rho_curves_match_prediction(pipeline, tmp_path):
    root, _ = pipeline
    out = tmp_path / "c.csv"
    assert run(["emit-plot-data", "--kind", "rho-curves", "--spectra", str(root / "model.bin"),
                "--mean-params", str(root / "mean.json"), "--scenario", "high",
                "--years", "2005,2015", "--n-omega", "5", "--location", "1", "--out", str(out)]) == 0
    rows = _rows(out)[1:]
    model = SpectralChangeModel.load(root / "model.bin")
    params = MeanEmulatorParams.load(root / "mean.json")
    wp = warming_path(params, params.trajectory("high"), 2005, 11 * DAYS_PER_YEAR)
    wp = wp.for_locations(params.partition.region_of)
    t = [182.0, 10 * DAYS_PER_YEAR + 182.0]
    lr, _ = predict_log_rho(model, wp, t, np.linspace(0, np.pi, 5))
    got = np.array([float(r[4]) for r in rows]).reshape(2, 5)
    assert np.allclose(got, np.exp(lr[:, 1, :]), rtol=1e-14)


@pytest.mark.parametrize("kind", ["rho-map", "densities", "coherence"])
def test_plot_headers_match_schema(pipeline, tmp_path, kind):
    root, man = pipeline
    grid = str(root / "fx" / "historical_r0.f64grid")
    seas = tmp_path / "seas.f64grid"
    assert run(["fit-seasonal", "--input", man, "--out", str(seas)]) == 0
    extra = {"rho-map": ["--spectra", str(root / "model.bin"), "--mean-params", str(root / "mean.json"),
                         "--scenario", "high", "--years", "2010", "--ensemble", man],
             "densities": ["--grids", grid, "--n-omega", "20"],
             "coherence": ["--grids", grid, "--seasonal", str(seas), "--pair", "0,1", "--block-years", "5"]}
    out = tmp_path / f"{kind}.csv"
    assert run(["emit-plot-data", "--kind", kind, *extra[kind], "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == PLOT_COLUMNS[kind] and len(rows) > 1


def test_simulate_reduces_to_delta_method(pipeline, tmp_path):
    root, man = pipeline
    model = SpectralChangeModel.load(root / "model.bin")
    flat = SpectralChangeModel(model.block, np.zeros_like(model.delta_hat), np.zeros_like(model.var_hat),
                               model.delta_rough, model.log_a_rough, model.rough_cov, model.region_of,
                               model.bandwidths, True)
    flat.save(tmp_path / "flat.bin")
    obs = str(root / "fx" / "historical_r0.f64grid")
    seas = tmp_path / "obs_seas.f64grid"
    mean = str(root / "mean.json")
    assert run(["fit-seasonal", "--input", obs, "--mean-params", mean, "--out", str(seas)]) == 0
    out = tmp_path / "sim.f64grid"
    assert run(["simulate", "--obs", obs, "--seasonal", str(seas), "--spectra", str(tmp_path / "flat.bin"),
                "--mean-params", mean, "--scenario", "high", "--obs-years", "1965:1974",
                "--target-years", "2005:2014", "--threads", "2", "--out", str(out)]) == 0
    sim, hdr = read_grid_series(out)
    y, _ = read_grid_series(obs)
    y = y[5 * DAYS_PER_YEAR:15 * DAYS_PER_YEAR]
    params = MeanEmulatorParams.load(mean)
    n = y.shape[0]
    change = (local_mean_change(params, params.trajectory("high"), 2005, n)
              - local_mean_change(params, params.trajectory("historical"), 1965, n))
    assert hdr.start_year == 2005
    assert np.max(np.abs(sim - y - change)) <= 1e-7


def test_simulate_rejects_unequal_periods(pipeline, tmp_path):
    root, _ = pipeline
    obs = str(root / "fx" / "historical_r0.f64grid")
    assert run(["simulate", "--obs", obs, "--seasonal", obs, "--spectra", str(root / "model.bin"),
                "--mean-params", str(root / "mean.json"), "--scenario", "high",
                "--obs-years", "1965:1974", "--target-years", "2005:2010",
                "--out", str(tmp_path / "x")]) == 2
