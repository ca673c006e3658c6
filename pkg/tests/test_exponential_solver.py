import math

import numpy as np
import pytest

from illiquid.errors import DomainError, InvalidParametersError, NonConvergenceError
from illiquid.market_model import merton_curve, reduction_constant
from illiquid.models import MarketParams
from illiquid.solvers.base_solver import SolveStatus
from illiquid.solvers.exponential_solver import (
    ExponentialSolver,
    curve_residual,
    fit_envelope,
    fit_upper_bound_constant,
    policies,
    reconstruct_value,
    second_derivative_root,
    solve_stationary,
)


@pytest.fixture(scope="module")
def merton_like_curve(no_dividend_market, exp_law, zgrid):
    return solve_stationary(no_dividend_market, exp_law.kappa, zgrid)


def test_merton_curve_solves_the_equation_without_dividends(no_dividend_market):
    kappa = 0.5
    z = np.logspace(-2, 4, 25)
    v = merton_curve(z, kappa, no_dividend_market)
    residual = curve_residual(no_dividend_market, kappa, z, v, 1.0 / (kappa * z), -1.0 / (kappa * z**2))
    np.testing.assert_allclose(residual, 0.0, atol=1e-10)


def test_no_dividends_reproduces_merton(merton_like_curve, no_dividend_market, exp_law, zgrid):
    expected = merton_curve(zgrid.nodes, exp_law.kappa, no_dividend_market)
    np.testing.assert_allclose(merton_like_curve.v, expected, atol=1e-7)
    assert merton_like_curve.max_residual() < 1e-8
    assert fit_upper_bound_constant(merton_like_curve, no_dividend_market, exp_law.kappa, 0.0) == 0.0


class TestDividendCurve:
    def test_shape(self, curve):
        assert np.all(curve.vz > 0.0)
        assert np.all(curve.vzz < 0.0)

    def test_residual(self, curve):
        assert curve.max_residual() < 1e-6

    def test_merton_limits_at_the_last_node(self, curve, market, exp_law):
        pi_over_l, c_over_l = curve.policy_ratios()
        assert c_over_l[-2] == pytest.approx(exp_law.kappa, rel=1e-2)
        assert pi_over_l[-2] == pytest.approx(market.excess_return / market.sigma**2, rel=1e-2)

    def test_dividends_add_value(self, curve, market, exp_law):
        lower = merton_curve(curve.grid.nodes, exp_law.kappa, market)
        assert np.all(curve.v >= lower - 1e-6)
        assert curve.v[0] > lower[0]

    def test_upper_bound_constant_is_finite(self, curve, market, exp_law):
        c1 = fit_upper_bound_constant(curve, market, exp_law.kappa, market.delta)
        assert 0.0 <= c1 < math.inf

    def test_envelope_brackets_the_curve(self, curve):
        envelope = fit_envelope(curve)
        assert envelope.strict
        z = curve.grid.nodes[1:-1]
        assert np.all(envelope.minorant(z) < curve.v[1:-1])
        assert np.all(curve.v[1:-1] < envelope.majorant(z))

    def test_envelope_exponent_range(self, curve):
        with pytest.raises(DomainError):
            fit_envelope(curve, gamma=1.0)

    def test_second_derivative_root_matches_solution(self, curve, market, exp_law):
        i = curve.grid.size // 2
        root = second_derivative_root(
            float(curve.v[i]), float(curve.vz[i]), float(curve.grid.nodes[i]), market, exp_law.kappa
        )
        assert root < 0.0
        assert root == pytest.approx(curve.vzz[i], rel=1e-4)

    def test_second_derivative_root_needs_increasing_value(self, market):
        with pytest.raises(DomainError):
            second_derivative_root(0.0, -1.0, 1.0, market, 0.5)


class TestReconstruction:
    def test_scaling_in_wealth(self, curve, market, exp_law):
        kappa = exp_law.kappa
        t, l, h = 0.7, 3.0, 1.5
        base = reconstruct_value(t, l, h, curve, market, kappa)
        scaled = reconstruct_value(t, 2.0 * l, 2.0 * h, curve, market, kappa)
        assert scaled - base == pytest.approx(math.exp(-kappa * t) * math.log(2.0) / kappa, abs=1e-10)

    def test_unit_illiquid_wealth(self, curve, market, exp_law):
        value = reconstruct_value(0.0, 5.0, 1.0, curve, market, exp_law.kappa)
        assert value == pytest.approx(curve.value_at(5.0) + reduction_constant(exp_law.kappa, market))

    def test_policies_agree_with_ratios_at_nodes(self, curve, market):
        i = 120
        z = float(curve.grid.nodes[i])
        pi_over_l, c_over_l = curve.policy_ratios()
        pi, c = policies(curve, z * 2.0, 2.0, market)
        assert c == pytest.approx(c_over_l[i] * z * 2.0, rel=1e-8)
        assert pi == pytest.approx(pi_over_l[i] * z * 2.0, rel=1e-8)

    def test_outside_the_grid(self, curve, market, exp_law):
        with pytest.raises(DomainError):
            curve.value_at(1e5)
        with pytest.raises(DomainError):
            reconstruct_value(0.0, 1e-4, 1.0, curve, market, exp_law.kappa)
        with pytest.raises(DomainError):
            reconstruct_value(-1.0, 1.0, 1.0, curve, market, exp_law.kappa)


class TestFailures:
    def test_iteration_budget(self, market, zgrid):
        with pytest.raises(NonConvergenceError) as info:
            solve_stationary(market, 0.5, zgrid, max_iter=1)
        assert info.value.iterations == 1

    def test_invalid_market(self, zgrid):
        p = MarketParams(r=0.05, alpha=0.1, sigma=0.5, mu=0.03, delta=0.0, eta=0.3, rho=1.0)
        with pytest.raises(InvalidParametersError):
            solve_stationary(p, 0.5, zgrid)

    def test_kappa_must_be_positive(self, market, zgrid):
        with pytest.raises(DomainError):
            solve_stationary(market, 0.0, zgrid)


def test_solver_record(market, exp_law, zgrid):
    solver = ExponentialSolver(market, exp_law, zgrid)
    assert solver.record.status == SolveStatus.PENDING
    curve = solver.solve()
    assert solver.record.status == SolveStatus.COMPLETED
    assert solver.result is curve
    assert solver.record.summary["n_nodes"] == zgrid.size
    assert solver.record.to_dict()["elapsed_s"] >= 0.0


def test_failed_solve_is_recorded(market, exp_law, zgrid):
    solver = ExponentialSolver(market, exp_law, zgrid, max_iter=1)
    with pytest.raises(NonConvergenceError):
        solver.solve()
    assert solver.record.status == SolveStatus.FAILED
    assert "did not converge" in solver.record.error
