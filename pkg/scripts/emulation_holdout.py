"""Fit on the outer scenarios, predict the middle one, and compare full and reduced models.

    python scripts/emulation_holdout.py --n-lon 4
"""
import argparse

import numpy as np

from evoclim.grid import DAYS_PER_YEAR
from evoclim.mean_emulator import MeanEmulatorParams, warming_path
from evoclim.preprocess import fit_seasonal
from evoclim.spectral import fit_spectral_model, predict_log_rho, predictive_loglik, whittle_data_from_ensemble
from evoclim.synthetic import ScenarioSpec, SyntheticSpec, cosine_series, make_synthetic_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-lon", type=int, default=4)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--block-years", type=int, default=10)
    args = ap.parse_args()
    d0, d1 = [-0.15, 0.1], [600.0, -200.0]
    spec = SyntheticSpec(n_lat=1, n_lon=args.n_lon, seed=args.seed, baseline_years=300, delta0=d0, delta1=d1,
                         scenarios=[ScenarioSpec(s, 4, 1900, 140, 280.0, c)
                                    for s, c in (("low", 560.0), ("mid", 1120.0), ("high", 2240.0))])
    ens, truth = make_synthetic_ensemble(spec)
    params = MeanEmulatorParams.from_json(truth["mean_params"])
    seasonal = fit_seasonal(ens.baseline.runs[0])
    warm = {r.label: warming_path(params, r.forcing, r.start_year, r.n_time).for_locations(
        params.partition.region_of) for r in ens.transient}
    data = whittle_data_from_ensemble(ens, seasonal, warm, args.block_years * DAYS_PER_YEAR)
    train, held = data.without("mid"), data.only("mid")
    full = fit_spectral_model(train)
    reduced = fit_spectral_model(train, with_rate=False)
    path = warm["mid"]
    t = path.block_midpoints(data.block)
    pred, se = predict_log_rho(full, path, t, full.freqs)
    dbar, rate = path.at(t)
    exact = dbar[:, :, None] * cosine_series(d0)(full.freqs) + rate[:, :, None] * cosine_series(d1)(full.freqs)
    inside = np.abs(pred - exact) <= 2 * se
    print(f"log rho within 2 SE: {inside.mean():.3f} overall, per location "
          f"{np.round(inside.mean(axis=(0, 2)), 3)}")
    gain = predictive_loglik(full, held) - predictive_loglik(reduced, held)
    print(f"full - reduced predictive loglik per location: {np.round(gain, 1)}")


if __name__ == "__main__":
    main()
