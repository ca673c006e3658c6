"""Shared fixtures: market constants, laws and coarse solved curves/surfaces."""
import pytest

from illiquid.liquidation import ExponentialLaw, WeibullLaw
from illiquid.models import MarketParams
from illiquid.solvers.exponential_solver import solve_stationary
from illiquid.solvers.grids import TimeGrid, ZGrid
from illiquid.solvers.weibull_solver import solve_parabolic

N_TEST_NODES = 200
N_TEST_STEPS = 400


@pytest.fixture(scope="session")
def market() -> MarketParams:
    """Constants with r - (mu - delta) > 0."""
    return MarketParams(r=0.05, alpha=0.10, sigma=0.5, mu=0.05, delta=0.02, eta=0.3, rho=0.4)


@pytest.fixture(scope="session")
def no_dividend_market() -> MarketParams:
    return MarketParams(r=0.05, alpha=0.10, sigma=0.5, mu=0.03, delta=0.0, eta=0.3, rho=0.4)


@pytest.fixture(scope="session")
def figure_market() -> MarketParams:
    """Figure constants; they violate the drift condition."""
    return MarketParams(r=0.01, alpha=0.05, sigma=0.5, mu=0.05, delta=0.02, eta=0.3, rho=0.4)


@pytest.fixture(scope="session")
def exp_law() -> ExponentialLaw:
    return ExponentialLaw(kappa=0.5)


@pytest.fixture(scope="session")
def weibull_law() -> WeibullLaw:
    return WeibullLaw(**{"lambda": 2.0, "k": 2.0})


@pytest.fixture(scope="session")
def zgrid() -> ZGrid:
    return ZGrid.log_uniform(1e-2, 1e4, N_TEST_NODES)


@pytest.fixture(scope="session")
def curve(market, exp_law, zgrid):
    return solve_stationary(market, exp_law.kappa, zgrid)


@pytest.fixture(scope="session")
def surface(market, weibull_law, zgrid):
    tgrid = TimeGrid.for_law(weibull_law, n_steps=N_TEST_STEPS)
    return solve_parabolic(market, weibull_law, zgrid, tgrid)
