import re
import time

import numpy as np
import pytest

from evoclim.grid import (BASELINE, DAYS_PER_YEAR, ForcingTrajectory, GridSpec, RegionPartition,
                          ScenarioEnsemble, ScenarioId, ScenarioRuns)
from evoclim.spectral.periodogram import BaselinePeriodogram, LocalPeriodogramSet, n_half
from evoclim.spectral.whittle import TransientBlocks, build_whittle_data
from evoclim.synthetic import ScenarioSpec, SyntheticSpec, make_synthetic_ensemble


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_ensemble(n_years=3, n_loc=4, n_runs=2, seed=0):
    """Hand-built ensemble: one baseline run and one transient scenario."""
    g = np.random.default_rng(seed)
    n = n_years * DAYS_PER_YEAR
    base_sid = ScenarioId("base", BASELINE)
    hist_sid = ScenarioId("hist")
    years = np.arange(2000, 2000 + n_years)
    traj = ForcingTrajectory(hist_sid, years, np.linspace(300, 400, n_years), 280.0)
    scen = {
        "base": ScenarioRuns(base_sid, g.normal(size=(1, n, n_loc)), 1000,
                             ForcingTrajectory.constant(base_sid, 280.0)),
        "hist": ScenarioRuns(hist_sid, g.normal(size=(n_runs, n, n_loc)), 2000, traj),
    }
    return ScenarioEnsemble(GridSpec(1, n_loc), scen, RegionPartition.single(n_loc), 280.0)


@pytest.fixture(scope="session")
def tiny_spec():
    return SyntheticSpec(
        n_lat=1, n_lon=2, seed=7, baseline_years=40,
        scenarios=[ScenarioSpec("historical", 3, 1950, 30, 280.0, 400.0),
                   ScenarioSpec("high", 3, 1980, 30, 380.0, 1000.0)],
        delta0=[-0.1, 0.05], delta1=[0.0])


@pytest.fixture(scope="session")
def tiny_ensemble(tiny_spec):
    return make_synthetic_ensemble(tiny_spec)


def gamma_data(rng, block=64, L=2, R=4, n_blocks=6, K=20, delta0=-0.1, delta1=0.0, log_a=0.0,
               dbar=None, rate=None, scenarios=2):
    """Whittle data drawn exactly from the Gamma model of averaged periodograms."""
    terms = []
    H = n_half(block)
    j = np.arange(block)
    fold = np.minimum(j, block - j)
    for s in range(scenarios):
        d = np.linspace(0.2, 3.0, n_blocks) * (1 + 0.5 * s) if dbar is None else np.asarray(dbar, float)
        r = (0.01 + 0.02 * s) * np.cos(np.arange(n_blocks)) if rate is None else np.asarray(rate, float)
        eta = log_a + d[:, None, None] * delta0 + r[:, None, None] * delta1
        half = np.exp(eta) * rng.gamma(R - 1, 1.0, size=(n_blocks, L, H)) / R
        full = half[..., fold]
        per = LocalPeriodogramSet(full, block, R, f"s{s}")
        terms.append(TransientBlocks(per, d, r))
    base = (np.exp(log_a) * rng.gamma(K, 1.0, size=(L, H)) / K)[:, fold]
    bp = BaselinePeriodogram(base, block, K, K * block)
    return build_whittle_data(terms, bp)


# --------------------------------------------------------------------------- acceptance report

def pytest_sessionstart(session):
    session.config._evoclim_start = time.perf_counter()


def pytest_runtest_logreport(report):
    if report.when == "call" or report.outcome != "passed":
        num = re.search(r"test_criterion_(\d+)", report.nodeid)
        if num and "test_acceptance" in report.nodeid:
            _ACCEPTANCE.setdefault(int(num.group(1)), []).append(report)


_ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        reports = _ACCEPTANCE[num]
        lines = [v for r in reports for k, v in r.user_properties if k == "acceptance"]
        failed = any(r.failed for r in reports)
        if lines:
            line = lines[-1]
            if failed and line.startswith("PASS"):
                line = "FAIL" + line[4:]
        else:
            line = f"FAIL criterion {num:2d}: error before measurement"
        terminalreporter.write_line(line)
