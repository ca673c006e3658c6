import json
import math
from dataclasses import replace
from pathlib import Path

import pytest

from illiquid.config import parse_config
from illiquid.errors import DomainError
from illiquid.models import CheckReport, PathConfig, UtilityEstimate
from illiquid.policy import CurvePolicy, SurfacePolicy
from illiquid.simulation import estimate_utility_survival_weighted, perturbation_test
from illiquid.solvers.exponential_solver import reconstruct_value, solve_stationary
from illiquid.solvers.grids import ZGrid
from illiquid.solvers.weibull_solver import reconstruct_value as surface_value
from illiquid.validation import (
    PERTURBATION_POINTS,
    _gamma_by_quadrature,
    check_c1_stability,
    check_cutoff_sensitivity,
    check_gamma,
    check_homotheticity,
    check_merton_limit,
    check_proposition,
    check_psi1,
    check_psi_odes,
    check_refinement_order,
    check_residual,
    check_shape,
    check_solver_vs_mc,
    check_value_bounds,
    check_weibull_lower_bound,
    negative,
    run_suite,
)

EXPONENTIAL = Path(__file__).parent.parent / "configs" / "exponential.conf"


def estimate(mean: float, std_error: float) -> UtilityEstimate:
    return UtilityEstimate(mean=mean, std_error=std_error, n_effective=1000)


def test_report_verdicts():
    assert CheckReport.evaluate("a", 0.5, 1.0).passed
    assert not CheckReport.evaluate("a", 1.5, 1.0).passed
    assert not CheckReport.evaluate("a", math.nan, 1.0).passed
    info = CheckReport.informational("gap", 3.0, "no verdict")
    assert info.passed and math.isinf(info.threshold)
    record = json.loads(info.model_dump_json())
    assert set(record) == {"name", "passed", "measured", "threshold", "context"}
    assert record["threshold"] == math.inf


def test_gamma_check():
    report = check_gamma([(0.5, 1.0), (2.0, 3.0), (1.5, 20.0)])
    assert report.passed, report.context
    assert report.name == "incomplete_gamma"


@pytest.mark.parametrize("law_fixture", ["exp_law", "weibull_law"])
def test_psi1_check(law_fixture, request):
    report = check_psi1(request.getfixturevalue(law_fixture))
    assert report.passed, report.measured


def test_psi_odes_exponential(market, exp_law):
    psi2_report, theta_report, closed = check_psi_odes(exp_law, market)
    assert psi2_report.passed, psi2_report.measured
    assert theta_report.passed, theta_report.measured
    assert closed.passed and closed.threshold == 1e-8


def test_psi_odes_weibull(market, weibull_law):
    psi2_report, theta_report, closed = check_psi_odes(weibull_law, market, tol=1e-5)
    assert psi2_report.passed and theta_report.passed
    assert math.isinf(closed.threshold)


def test_curve_checks(curve, market, exp_law):
    assert check_residual(curve, 1e-6).passed
    assert check_shape(curve).passed
    c_report, pi_report = check_merton_limit(curve, market, exp_law, tol=1e-2)
    assert c_report.passed and pi_report.passed
    assert c_report.context.startswith("z_N=1e+04")


def test_value_bounds_reports_finite_c1(curve, market, exp_law):
    report = check_value_bounds(curve, market, exp_law.kappa, market.delta)
    assert math.isfinite(report.measured)
    assert "C1=" in report.context


def test_homotheticity_of_reconstruction(curve, market, exp_law):
    report = check_homotheticity(
        lambda t, l, h: reconstruct_value(t, l, h, curve, market, exp_law.kappa),
        lambda t: float(exp_law.psi1(t)),
        (0.1, 1e3),
        6.0,
    )
    assert report.passed, report.measured


def test_estimator_equivalence():
    assert check_proposition(estimate(-3.0, 0.01), estimate(-3.02, 0.01)).passed
    assert not check_proposition(estimate(-3.0, 0.01), estimate(-3.1, 0.01)).passed
    assert check_proposition(estimate(-3.0, 0.0), estimate(-3.0, 0.0)).passed
    assert not check_proposition(estimate(-3.0, 0.0), estimate(-3.1, 0.0)).passed


def test_solver_inside_confidence_interval():
    mc = estimate(-3.0, 0.01)
    assert check_solver_vs_mc(-3.01, mc).passed
    assert not check_solver_vs_mc(-3.05, mc).passed


def test_negative_inverts_verdict():
    failing = CheckReport.evaluate("merton_limit_pi", 0.3, 0.01)
    passing = CheckReport.evaluate("merton_limit_pi", 0.001, 0.01)
    assert negative(failing).passed
    assert not negative(passing).passed
    assert negative(failing).name == "negative:merton_limit_pi"


def test_gamma_quadrature_reference_values():
    for x in (0.0, 0.4, 3.0, 45.0):
        assert _gamma_by_quadrature(1.0, x) == pytest.approx(math.exp(-x), rel=1e-12)
    assert _gamma_by_quadrature(0.5, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-10)


def test_gamma_check_on_random_samples():
    report = check_gamma(seed=3)
    assert report.passed, report.context
    assert "200 samples" in report.context


def test_merton_limit_refuses_a_short_grid(market, exp_law):
    short = solve_stationary(market, exp_law.kappa, ZGrid.log_uniform(1e-2, 10.0, 60))
    with pytest.raises(DomainError, match="grid ends at z_N=10"):
        check_merton_limit(short, market, exp_law)


def test_surface_checks(surface, market, weibull_law):
    assert check_residual(surface, 1e-5).passed
    assert check_shape(surface).passed
    assert check_weibull_lower_bound(surface).passed
    c_report, pi_report = check_merton_limit(surface, market, weibull_law, tol=1e-2)
    assert c_report.passed and pi_report.passed


def test_lower_bound_violation_is_reported(surface):
    lowered = replace(surface, W=surface.W - 1.0)
    report = check_weibull_lower_bound(lowered)
    assert not report.passed
    assert report.measured == pytest.approx(1.0 - float(surface.lower_bound_gap().min()), rel=1e-9)


def test_c1_is_stable_under_refinement(curve, market, exp_law, zgrid):
    fine = solve_stationary(market, exp_law.kappa, zgrid.refined())
    report = check_c1_stability(curve, fine, market, exp_law.kappa, market.delta)
    assert report.name == "c1_refinement"
    assert report.passed, report.context


def test_refinement_differences_shrink(market, exp_law):
    report = check_refinement_order(market, exp_law, ZGrid.log_uniform(1e-2, 1e4, 61), n_steps=50)
    assert math.isfinite(report.measured)
    assert report.measured < 1.0, report.context
    assert report.threshold == pytest.approx(1.0 / 3.0)


def test_cutoff_sensitivity_is_small(market, weibull_law):
    report = check_cutoff_sensitivity(market, weibull_law, ZGrid.log_uniform(1e-2, 1e4, 61), n_steps=60)
    assert report.passed, report.context
    assert "T_max" in report.context


@pytest.mark.slow
class TestAgainstSimulation:
    CFG = PathConfig(dt=0.01, n_paths=4000, seed=21, chunk_size=2000)

    def test_solved_curve_policy_earns_the_solver_value(self, curve, market, exp_law):
        estimate = estimate_utility_survival_weighted(CurvePolicy(curve), market, exp_law, 1.0, 1.0, self.CFG)
        value = reconstruct_value(0.0, 1.0, 1.0, curve, market, exp_law.kappa)
        assert abs(estimate.mean - value) <= 4.0 * estimate.std_error + 0.01 * abs(value)

    def test_solved_surface_policy_earns_the_solver_value(self, surface, market, weibull_law):
        estimate = estimate_utility_survival_weighted(
            SurfacePolicy(surface), market, weibull_law, 1.0, 1.0, self.CFG
        )
        value = surface_value(surface, 0.0, 1.0, 1.0, weibull_law, market)
        assert abs(estimate.mean - value) <= 4.0 * estimate.std_error + 0.01 * abs(value)

    @pytest.mark.parametrize("l0, h0", PERTURBATION_POINTS)
    def test_perturbed_curve_policy_does_no_better(self, curve, market, exp_law, l0, h0):
        cfg = PathConfig(dt=0.05, horizon=10.0, n_paths=1000, seed=13, chunk_size=1000)
        report = perturbation_test(CurvePolicy(curve), market, exp_law, l0, h0, cfg)
        assert report.passed, report.worst_margin


@pytest.mark.slow
def test_suite_on_a_coarse_configuration():
    overrides = {
        "n_nodes": "201",
        "refinement_nodes": "41",
        "n_paths": "2000",
        "dt": "0.02",
        "chunk_size": "1000",
    }
    reports = run_suite(parse_config(EXPONENTIAL, overrides))
    by_name = {report.name: report for report in reports}
    for name in (
        "incomplete_gamma", "psi1_quadrature", "residual", "shape", "merton_limit_c", "merton_limit_pi",
        "value_bounds", "c1_refinement", "homotheticity", "negative:merton_limit_pi",
        "refinement_order", "estimator_equivalence", "solver_vs_mc",
    ):
        assert name in by_name
    for name in ("incomplete_gamma", "residual", "shape", "merton_limit_c", "negative:merton_limit_pi"):
        assert by_name[name].passed, by_name[name].context
    assert sum(report.name.startswith("perturbation(") for report in reports) == len(PERTURBATION_POINTS)
