import numpy as np
import pytest

from illiquid.liquidation import ExponentialLaw
from illiquid.policy import (
    ConstantPolicy,
    CurvePolicy,
    MertonPolicy,
    PolicyField,
    RatioPolicy,
    ScaledPolicy,
    SurfacePolicy,
)


def test_ratio_policy_is_flat_beyond_the_table():
    policy = RatioPolicy(np.array([0.1, 1.0, 10.0]), np.array([0.5, 0.4, 0.3]), np.array([1.0, 0.8, 0.6]))
    l = np.array([0.01, 1.0, 500.0])
    pi, c = policy.evaluate(0.0, l, np.ones(3))
    np.testing.assert_allclose(pi / l, [0.5, 0.4, 0.3])
    np.testing.assert_allclose(c / l, [1.0, 0.8, 0.6])
    assert policy.z_min == pytest.approx(0.1)


def test_curve_policy_matches_node_ratios(curve):
    policy = CurvePolicy(curve)
    pi_over_l, c_over_l = curve.policy_ratios()
    z = curve.grid.nodes[10:15]
    h = np.full(z.size, 3.0)
    pi, c = policy.evaluate(5.0, z * h, h)
    np.testing.assert_allclose(pi, pi_over_l[10:15] * z * h, rtol=1e-9)
    np.testing.assert_allclose(c, c_over_l[10:15] * z * h, rtol=1e-9)


def test_surface_policy_matches_grid_values(surface):
    policy = SurfacePolicy(surface)
    pi_over_l, c_over_l = surface.policy_ratios()
    i = 5
    t = float(surface.tgrid.nodes[i])
    z = surface.zgrid.nodes[40:44]
    pi, c = policy.evaluate(t, z, np.ones(z.size))
    np.testing.assert_allclose(pi, pi_over_l[i, 40:44] * z, rtol=1e-9)
    np.testing.assert_allclose(c, c_over_l[i, 40:44] * z, rtol=1e-9)


def test_merton_policy(market, weibull_law):
    exponential = MertonPolicy(market, ExponentialLaw(kappa=0.5))
    assert exponential.consumption_ratio(3.0) == pytest.approx(0.5)
    weibull = MertonPolicy(market, weibull_law)
    assert weibull.consumption_ratio(0.0) == pytest.approx(1.0 / weibull_law.mean())
    pi, _ = weibull.evaluate(1.0, np.array([2.0]), np.array([1.0]))
    assert pi[0] == pytest.approx(2.0 * market.excess_return / market.sigma**2)


def test_scaled_policy():
    policy = ScaledPolicy(ConstantPolicy(0.3, 0.1), pi_scale=1.2, c_scale=0.8)
    pi, c = policy.evaluate(0.0, np.array([2.0]), np.array([1.0]))
    assert pi[0] == pytest.approx(0.72)
    assert c[0] == pytest.approx(0.16)


@pytest.mark.parametrize("policy", [ConstantPolicy(0.1, 0.1), RatioPolicy([1.0, 2.0], [0.1, 0.1], [0.2, 0.2])])
def test_policies_satisfy_the_protocol(policy):
    assert isinstance(policy, PolicyField)
