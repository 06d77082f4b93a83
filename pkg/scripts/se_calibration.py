"""Compare the Monte Carlo spread of smoothed delta0 estimates with their analytic SE.

Locations share one truth and are independent, so each acts as a replicate.

    python scripts/se_calibration.py --n-lat 20 --n-lon 25
"""
import argparse
import time

import numpy as np

from evoclim.grid import DAYS_PER_YEAR
from evoclim.mean_emulator import MeanEmulatorParams, warming_path
from evoclim.preprocess import fit_seasonal
from evoclim.spectral import BandwidthParams, fit_spectral_model, whittle_data_from_ensemble
from evoclim.synthetic import ScenarioSpec, SyntheticSpec, make_synthetic_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-lat", type=int, default=20)
    ap.add_argument("--n-lon", type=int, default=25)
    ap.add_argument("--seed", type=int, default=21)
    ap.add_argument("--bandwidth", type=int, default=10)
    args = ap.parse_args()
    spec = SyntheticSpec(n_lat=args.n_lat, n_lon=args.n_lon, seed=args.seed, baseline_years=30,
                         delta0=[-0.1, 0.05], delta1=[300.0],
                         scenarios=[ScenarioSpec("slow", 3, 1950, 30, 280.0, 420.0),
                                    ScenarioSpec("fast", 3, 1950, 30, 280.0, 1120.0)])
    t0 = time.perf_counter()
    ens, truth = make_synthetic_ensemble(spec)
    params = MeanEmulatorParams.from_json(truth["mean_params"])
    seasonal = fit_seasonal(ens.baseline.runs[0])
    warm = {r.label: warming_path(params, r.forcing, r.start_year, r.n_time).for_locations(
        params.partition.region_of) for r in ens.transient}
    data = whittle_data_from_ensemble(ens, seasonal, warm, DAYS_PER_YEAR)
    model = fit_spectral_model(data, bandwidths=BandwidthParams.fixed(args.bandwidth))
    print(f"{spec.n_loc} replicates fitted in {time.perf_counter() - t0:.0f} s")
    u = model.freqs / np.pi
    for lo, hi in [(0.05, 0.3), (0.3, 0.7), (0.7, 0.95)]:
        band = (u >= lo) & (u <= hi)
        for i, name in enumerate(("delta0", "delta1")):
            sd = model.delta_hat[i][:, band].std(axis=0, ddof=1)
            se = np.sqrt(model.var_hat[i][:, band]).mean(axis=0)
            r = sd / se
            print(f"omega/pi in [{lo:.2f}, {hi:.2f}] {name}: SD/SE median {np.median(r):.3f}, "
                  f"range [{r.min():.3f}, {r.max():.3f}]")


if __name__ == "__main__":
    main()
