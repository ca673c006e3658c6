"""
Factory for creating solver instances.

Chooses between the stationary solver and the time-stepping solver based on
the liquidation law.
"""
import logging
from typing import Optional, Union

from .config import SolverSettings, settings as default_settings
from .liquidation import ExponentialLaw, WeibullLaw
from .models import MarketParams
from .solvers.exponential_solver import ExponentialSolver
from .solvers.grids import TimeGrid, ZGrid
from .solvers.weibull_solver import WeibullSolver

logger = logging.getLogger(__name__)


def create_solver(
    params: MarketParams,
    law: Union[ExponentialLaw, WeibullLaw],
    settings: Optional[SolverSettings] = None,
) -> Union[ExponentialSolver, WeibullSolver]:
    """
    Create a solver for the given liquidation law.

    Returns:
        ExponentialSolver for an exponential law (stationary equation)
        WeibullSolver for a Weibull law (backward time stepping)
    """
    settings = settings or default_settings
    zgrid = ZGrid.from_spec(settings.grid)
    if isinstance(law, ExponentialLaw):
        logger.info(f"Stationary solver for exponential law, kappa={law.kappa}")
        return ExponentialSolver(
            params,
            law,
            zgrid,
            tol=settings.tol,
            max_iter=settings.max_iter,
            concavity_floor=settings.concavity_floor,
        )
    logger.info(f"Time-stepping solver for Weibull law, lambda={law.lambda_}, k={law.k}")
    tgrid = TimeGrid.for_law(law, cutoff=settings.survival_cutoff, n_steps=settings.n_time_steps)
    return WeibullSolver(
        params,
        law,
        zgrid,
        tgrid,
        tol=settings.tol,
        inner_max_iter=settings.inner_max_iter,
        concavity_floor=settings.concavity_floor,
    )
