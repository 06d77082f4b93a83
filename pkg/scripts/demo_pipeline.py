"""Run the full command-line pipeline on a small synthetic ensemble.

    python scripts/demo_pipeline.py --work-dir /tmp/evoclim-demo
"""
import argparse
import csv
import json
from pathlib import Path

import numpy as np

from evoclim.cli import run
from evoclim.grid import read_grid_series

SPEC = {"n_lat": 2, "n_lon": 3, "seed": 7, "baseline_years": 60,
        "delta0": [-0.15, 0.1], "delta1": [600.0, -200.0],
        "scenarios": [{"label": "historical", "n_runs": 4, "start_year": 1950, "n_years": 60,
                       "co2_start": 300.0, "co2_end": 400.0},
                      {"label": "high", "n_runs": 4, "start_year": 2010, "n_years": 60,
                       "co2_start": 400.0, "co2_end": 1000.0}]}


def step(*argv):
    print("evoclim", " ".join(argv))
    code = run(list(argv))
    if code:
        raise SystemExit(f"step failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work-dir", type=Path, default=Path("demo-run"))
    ap.add_argument("--threads", default="2")
    args = ap.parse_args()
    w = args.work_dir
    w.mkdir(parents=True, exist_ok=True)
    (w / "spec.json").write_text(json.dumps(SPEC, indent=2))
    fx = w / "fixture"
    man = str(fx / "manifest.json")
    obs = str(fx / "historical_r0.f64grid")

    step("synth", "--spec", str(w / "spec.json"), "--out-dir", str(fx))
    step("fit-mean", "--ensemble", man, "--out", str(w / "mean.json"))
    step("fit-spectra", "--ensemble", man, "--mean-params", str(w / "mean.json"), "--block-years", "5",
         "--threads", args.threads, "--out", str(w / "model.bin"))
    step("diagnose", "--ensemble", man, "--mean-params", str(w / "mean.json"), "--spectra", str(w / "model.bin"),
         "--deviance", "--block-years", "5", "--out", str(w / "deviance.csv"))
    step("fit-seasonal", "--input", obs, "--mean-params", str(w / "mean.json"), "--out", str(w / "obs_seas.f64grid"))
    step("simulate", "--obs", obs, "--seasonal", str(w / "obs_seas.f64grid"), "--spectra", str(w / "model.bin"),
         "--mean-params", str(w / "mean.json"), "--scenario", "high", "--obs-years", "1980:2009",
         "--target-years", "2040:2069", "--taylor-order", "14", "--threads", args.threads, "--out", str(w / "sim.f64grid"))
    step("emit-plot-data", "--kind", "rho-curves", "--spectra", str(w / "model.bin"),
         "--mean-params", str(w / "mean.json"), "--scenario", "high", "--years", "2020,2060",
         "--out", str(w / "rho_curves.csv"))

    sim, _ = read_grid_series(w / "sim.f64grid")
    y, _ = read_grid_series(obs)
    y = y[30 * 365:60 * 365]
    with open(w / "deviance.csv", newline="") as fh:
        dev = [float(r[1]) for r in list(csv.reader(fh))[1:]]
    print(f"\nsimulated {sim.shape[0]} days at {sim.shape[1]} locations")
    print(f"mean shift  {np.mean(sim - y):+.2f} K")
    print(f"sd ratio    {np.mean(np.std(sim, axis=0) / np.std(y, axis=0)):.3f}")
    print(f"deviance    {np.round(dev, 1)}")
    print(f"outputs in  {w.resolve()}")


if __name__ == "__main__":
    main()
