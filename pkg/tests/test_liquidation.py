import math

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError
from scipy import special

from illiquid.errors import DomainError
from illiquid.liquidation import (
    ExponentialLaw,
    LiquidationLaw,
    WeibullLaw,
    asymptotic_psi,
    log_upper_incomplete_gamma,
    psi2,
    psi2_closed_form,
    psi2_on,
    t_cut,
    theta,
    theta_closed_form,
    theta_on,
    upper_incomplete_gamma,
)
from illiquid.market_model import merton_constant, reduction_constant


class TestIncompleteGamma:
    @pytest.mark.parametrize("a", [0.2, 0.5, 1.0, 2.5, 4.0])
    @pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 3.5, 10.0, 40.0])
    def test_matches_scipy(self, a, x):
        reference = special.gammaincc(a, x) * special.gamma(a)
        assert upper_incomplete_gamma(a, x) == pytest.approx(reference, rel=1e-10)

    def test_exponential_case(self):
        x = np.array([0.0, 0.5, 2.0, 20.0])
        np.testing.assert_allclose(upper_incomplete_gamma(1.0, x), np.exp(-x), rtol=1e-12)

    def test_log_stays_finite_far_in_the_tail(self):
        value = log_upper_incomplete_gamma(0.5, 1000.0)
        # Gamma(a, x) ~ x^(a-1) e^(-x)
        assert value == pytest.approx(-1000.0 - 0.5 * math.log(1000.0), abs=1e-3)

    @pytest.mark.parametrize("a, x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1)])
    def test_domain(self, a, x):
        with pytest.raises(DomainError):
            upper_incomplete_gamma(a, x)


class TestLaws:
    def test_exponential_functions(self, exp_law):
        assert exp_law.survival(2.0) == pytest.approx(math.exp(-1.0))
        assert exp_law.psi1(0.0) == pytest.approx(2.0)
        assert exp_law.pdf(0.0) == pytest.approx(0.5)
        assert exp_law.mean() == pytest.approx(2.0)

    def test_weibull_psi1_at_zero_is_the_mean(self, weibull_law):
        assert weibull_law.psi1(0.0) == pytest.approx(weibull_law.mean(), rel=1e-10)
        assert weibull_law.mean() == pytest.approx(2.0 * math.gamma(1.5))

    def test_weibull_with_unit_shape_is_exponential(self):
        weibull = WeibullLaw(**{"lambda": 2.0, "k": 1.0})
        exponential = ExponentialLaw(kappa=0.5)
        t = np.linspace(0.0, 20.0, 11)
        np.testing.assert_allclose(weibull.survival(t), exponential.survival(t), rtol=1e-12)
        np.testing.assert_allclose(weibull.psi1(t), exponential.psi1(t), rtol=1e-10)

    def test_pdf_is_minus_survival_derivative(self, weibull_law):
        t = np.array([0.5, 1.0, 2.5])
        h = 1e-6
        derivative = (weibull_law.survival(t + h) - weibull_law.survival(t - h)) / (2 * h)
        np.testing.assert_allclose(weibull_law.pdf(t), -derivative, rtol=1e-6)

    @pytest.mark.parametrize("law", [ExponentialLaw(kappa=0.5), WeibullLaw(**{"lambda": 2.0, "k": 3.0})])
    def test_sample_tau_inverts_survival(self, law):
        u = np.array([1.0, 0.9, 0.5, 1e-3])
        np.testing.assert_allclose(law.survival(law.sample_tau(u)), u, rtol=1e-10)

    @pytest.mark.parametrize("law", [ExponentialLaw(kappa=0.5), WeibullLaw(**{"lambda": 2.0, "k": 2.0})])
    def test_horizon_is_survival_cutoff(self, law):
        assert law.survival(law.horizon(1e-6)) == pytest.approx(1e-6, rel=1e-9)

    def test_negative_time_is_rejected(self, exp_law, weibull_law):
        with pytest.raises(DomainError):
            exp_law.survival(-1.0)
        with pytest.raises(DomainError):
            weibull_law.psi1(np.array([0.0, -0.5]))

    def test_shape_below_one_is_rejected(self):
        with pytest.raises(ValidationError):
            WeibullLaw(**{"lambda": 2.0, "k": 0.5})

    def test_discriminated_union(self):
        adapter = TypeAdapter(LiquidationLaw)
        law = adapter.validate_python({"law": "weibull", "lambda": 2.0, "k": 2.0})
        assert isinstance(law, WeibullLaw)
        assert law.lambda_ == 2.0
        law = adapter.validate_python({"law": "exponential", "kappa": 0.3})
        assert isinstance(law, ExponentialLaw)

    def test_t_cut(self, exp_law):
        assert t_cut(exp_law) == pytest.approx(-math.log(1e-14) / 0.5)


class TestAuxiliaryFunctions:
    TIMES = np.array([0.0, 0.7, 2.0, 5.0])

    def test_exponential_psi2_and_theta_match_closed_forms(self, market, exp_law):
        kappa = exp_law.kappa
        t = self.TIMES
        expected_psi2 = np.exp(-kappa * t) * (reduction_constant(kappa, market) - t - 2.0 / kappa)
        expected_theta = np.exp(-kappa * t) * (merton_constant(kappa, market) + math.log(kappa) / kappa)
        np.testing.assert_allclose(psi2(exp_law, t, market), expected_psi2, atol=1e-8)
        np.testing.assert_allclose(theta(exp_law, t, market), expected_theta, atol=1e-8)
        np.testing.assert_allclose(psi2_closed_form(exp_law, t, market), expected_psi2, atol=1e-12)
        np.testing.assert_allclose(theta_closed_form(exp_law, t, market), expected_theta, atol=1e-12)

    def test_node_evaluation_matches_pointwise(self, market, weibull_law):
        t = np.linspace(0.0, 6.0, 13)
        np.testing.assert_allclose(psi2_on(weibull_law, t, market), psi2(weibull_law, t, market), atol=1e-9)
        np.testing.assert_allclose(theta_on(weibull_law, t, market), theta(weibull_law, t, market), atol=1e-9)

    def test_scalar_in_scalar_out(self, market, weibull_law):
        assert isinstance(psi2(weibull_law, 1.0, market), float)
        assert isinstance(weibull_law.psi1(1.0), float)

    def test_node_evaluation_needs_increasing_times(self, market, weibull_law):
        with pytest.raises(DomainError):
            psi2_on(weibull_law, np.array([0.0, 2.0, 1.0]), market)

    def test_asymptotic_psi1(self, weibull_law):
        t = 5.0 * weibull_law.lambda_
        psi1_asym, _, _ = asymptotic_psi(weibull_law, t)
        assert psi1_asym == pytest.approx(weibull_law.psi1(t), rel=0.05)

    def test_asymptotic_psi_needs_shape_above_one(self, exp_law):
        with pytest.raises(DomainError):
            asymptotic_psi(WeibullLaw(**{"lambda": 2.0, "k": 1.0}), 10.0)
        with pytest.raises(DomainError):
            asymptotic_psi(exp_law, 10.0)

    @pytest.mark.parametrize("law_fixture", ["exp_law", "weibull_law"])
    def test_beyond_practical_infinity_everything_vanishes(self, law_fixture, market, request):
        law = request.getfixturevalue(law_fixture)
        t = 1.01 * t_cut(law)
        assert abs(law.psi1(t)) < 1e-10
        assert abs(psi2(law, t, market)) < 1e-10
        assert abs(theta(law, t, market)) < 1e-10
