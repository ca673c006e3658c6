from pathlib import Path

import numpy as np
import pytest

from illiquid.config import parse_config
from illiquid.figure import ASYMPTOTE_Z, FigureCurve, observe, run_figure1
from illiquid.solvers.exponential_solver import solve_stationary
from illiquid.solvers.grids import ZGrid

FIG1 = Path(__file__).parent.parent / "configs" / "fig1.conf"
MERTON_PI = 0.16
KAPPA = 0.5


def synthetic(name: str, wiggle: float = 0.0) -> FigureCurve:
    z = np.logspace(-2, 4, 121)
    approach = 1.0 / (1.0 + z)
    pi = MERTON_PI * (1.0 - approach)
    pi[z > ASYMPTOTE_Z] += wiggle * np.sin(np.arange(np.count_nonzero(z > ASYMPTOTE_Z)))
    c = KAPPA * (1.0 + approach)
    return FigureCurve(name, z, pi, c, KAPPA)


def test_monotone_curve_holds_every_feature():
    observations = observe([synthetic("exponential")], MERTON_PI, tol=1e-2)
    assert observations == {
        "exponential:merton_asymptote": True,
        "exponential:monotone_approach": True,
        "exponential:risky_share_below_merton": True,
    }


def test_oscillating_tail_is_not_a_monotone_approach():
    observations = observe([synthetic("weibull_k2", wiggle=1e-4)], MERTON_PI, tol=1e-2)
    assert not observations["weibull_k2:monotone_approach"]
    assert observations["weibull_k2:merton_asymptote"]


def test_merton_baseline_is_not_observed():
    z = np.logspace(-2, 4, 11)
    flat = FigureCurve("merton", z, np.full(11, MERTON_PI), np.full(11, KAPPA), KAPPA)
    assert observe([flat], MERTON_PI, tol=1e-2) == {}


@pytest.mark.slow
def test_reruns_write_identical_files(tmp_path):
    overrides = {"n_nodes": "150", "n_time_steps": "150", "weibull_k_values": "2"}
    config = parse_config(FIG1, overrides)
    first = run_figure1(config, tmp_path / "a")
    second = run_figure1(config, tmp_path / "b")
    assert set(first.files) == {"merton", "exponential", "weibull_k2", "combined"}
    for name, path in first.files.items():
        assert path.read_bytes() == second.files[name].read_bytes()
    assert first.observations == second.observations
    assert "weibull_k2:monotone_approach" in first.observations


@pytest.mark.slow
def test_figure_market_with_slow_liquidation(figure_market):
    kappa = 0.2
    zgrid = ZGrid.log_uniform(1e-2, 1e4, 2000)
    curve = solve_stationary(figure_market, kappa, zgrid)
    assert curve.max_residual() <= 1e-6
    assert np.all(curve.vz > 0.0) and np.all(curve.vzz < 0.0)
    pi_over_l, c_over_l = curve.policy_ratios()
    merton_pi = figure_market.excess_return / figure_market.sigma**2
    assert c_over_l[-2] == pytest.approx(kappa, rel=1e-2)
    assert pi_over_l[-2] == pytest.approx(merton_pi, rel=1e-2)
    assert np.all(pi_over_l[zgrid.nodes < 19.0] < merton_pi)
