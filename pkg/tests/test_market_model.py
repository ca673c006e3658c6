import math

import pytest

from illiquid.errors import DomainError, InvalidParametersError
from illiquid.market_model import (
    DRIFT_FIELD,
    check_invariants,
    derived_constants,
    merton_constant,
    merton_curve,
    merton_policies,
    merton_value,
    reduction_constant,
    require_solvable,
    validate,
)
from illiquid.models import MarketParams


def test_derived_constants_of_figure_market(figure_market):
    coeffs = derived_constants(figure_market)
    assert coeffs.d1 == pytest.approx(-0.08)
    assert coeffs.d2 == pytest.approx(0.0378)
    assert coeffs.d3 == pytest.approx(0.0652)
    assert coeffs.quadratic == pytest.approx(0.5 * (0.5 * -0.08) ** 2)


def test_valid_market_has_no_violations(market):
    assert check_invariants(market) == []
    validate(market)


def test_drift_violation_is_reported_and_can_be_relaxed(figure_market):
    violations = check_invariants(figure_market)
    assert [v.field for v in violations] == [DRIFT_FIELD]
    assert DRIFT_FIELD == "r - (mu - delta)"
    with pytest.raises(InvalidParametersError):
        validate(figure_market)
    validate(figure_market, relax_drift_check=True)
    require_solvable(figure_market)


def test_every_violation_is_collected():
    p = MarketParams(r=0.05, alpha=0.1, sigma=0.0, mu=0.01, delta=-0.1, eta=0.0, rho=1.0)
    with pytest.raises(InvalidParametersError) as info:
        validate(p)
    fields = {v.field for v in info.value.violations}
    assert {"sigma", "eta", "rho", "delta"} <= fields


def test_zero_hedged_excess_return_is_rejected():
    # alpha - r = eta * rho * sigma
    p = MarketParams(r=0.05, alpha=0.05 + 0.3 * 0.4 * 0.5, sigma=0.5, mu=0.03, delta=0.0, eta=0.3, rho=0.4)
    with pytest.raises(InvalidParametersError):
        require_solvable(p)


def test_merton_value_of_figure_market(figure_market):
    assert merton_value(1.0, 0.2, figure_market) == pytest.approx(-12.717, abs=1e-3)


def test_merton_policies(market):
    pi, c = merton_policies(2.0, 0.5, market)
    assert pi == pytest.approx(2.0 * 0.05 / 0.25)
    assert c == pytest.approx(1.0)


def test_merton_curve_is_value_minus_reduction_constant(market):
    z = 3.0
    expected = merton_value(z, 0.5, market) - reduction_constant(0.5, market)
    assert float(merton_curve([z], 0.5, market)[0]) == pytest.approx(expected)


@pytest.mark.parametrize("kappa", [0.0, -1.0])
def test_constants_need_positive_kappa(market, kappa):
    with pytest.raises(DomainError):
        merton_constant(kappa, market)
    with pytest.raises(DomainError):
        reduction_constant(kappa, market)


def test_merton_value_needs_positive_wealth(market):
    with pytest.raises(DomainError):
        merton_value(0.0, 0.5, market)
    with pytest.raises(DomainError):
        merton_curve([1.0, -1.0], 0.5, market)


def test_market_params_reject_nan():
    with pytest.raises(ValueError):
        MarketParams(r=math.nan, alpha=0.1, sigma=0.5, mu=0.03, delta=0.0, eta=0.3, rho=0.4)
