"""
Market constants, derived coefficients and the Merton baseline.
"""
import logging
import math

import numpy as np

from .errors import DomainError, InvalidParametersError
from .models import DCoefficients, MarketParams, ParameterViolation

logger = logging.getLogger(__name__)

DRIFT_FIELD = "r - (mu - delta)"


def check_invariants(p: MarketParams) -> list[ParameterViolation]:
    """Return every violated invariant of p, drift condition included."""
    violations: list[ParameterViolation] = []
    if p.sigma <= 0.0:
        violations.append(ParameterViolation(field="sigma", message="must be > 0"))
    if p.eta <= 0.0:
        violations.append(ParameterViolation(field="eta", message="must be > 0"))
    if not -1.0 < p.rho < 1.0:
        violations.append(
            ParameterViolation(field="rho", message="correlation must lie in (-1, 1)")
        )
    if p.delta < 0.0:
        violations.append(ParameterViolation(field="delta", message="must be >= 0"))
    if p.r - p.net_growth <= 0.0:
        violations.append(
            ParameterViolation(
                field=DRIFT_FIELD,
                message=f"{p.r - p.net_growth:.6g} must be > 0",
            )
        )
    if p.sigma > 0.0 and abs(p.hedged_excess_return) < 1e-14:
        violations.append(
            ParameterViolation(
                field="alpha", message="d1 = (alpha - r - eta*rho*sigma)/sigma^2 must be non-zero"
            )
        )
    return violations


def validate(p: MarketParams, relax_drift_check: bool = False) -> None:
    """Check all market invariants.

    Args:
        p: Market parameters
        relax_drift_check: Downgrade the r - (mu - delta) > 0 condition to a warning

    Raises:
        InvalidParametersError: One entry per violated invariant
    """
    violations = check_invariants(p)
    if relax_drift_check:
        drift = [v for v in violations if v.field == DRIFT_FIELD]
        for v in drift:
            logger.warning(f"Drift condition relaxed: {v.message}")
        violations = [v for v in violations if v.field != DRIFT_FIELD]
    if violations:
        raise InvalidParametersError(violations)


def require_solvable(p: MarketParams) -> None:
    """Raise for every invariant the solvers depend on; the drift condition is not one."""
    violations = [v for v in check_invariants(p) if v.field != DRIFT_FIELD]
    if violations:
        raise InvalidParametersError(violations)


def derived_constants(p: MarketParams) -> DCoefficients:
    """Evaluate d1, d2, d3 and the quadratic coefficient of the reduced equation."""
    d1 = p.hedged_excess_return / p.sigma**2
    d2 = 0.5 * p.eta**2 * (1.0 - p.rho**2)
    d3 = 2.0 * d2 + (p.rho * p.eta / p.sigma) * p.excess_return + p.r - p.net_growth
    quadratic = 0.5 * (p.sigma * d1) ** 2
    return DCoefficients(d1=d1, d2=d2, d3=d3, quadratic=quadratic)


def merton_constant(kappa: float, p: MarketParams) -> float:
    """M = [r + (alpha - r)^2 / (2 sigma^2) - kappa] / kappa^2"""
    if kappa <= 0.0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return (p.r + 0.5 * p.excess_return**2 / p.sigma**2 - kappa) / kappa**2


def reduction_constant(kappa: float, p: MarketParams) -> float:
    """K = (mu - delta - eta^2/2) / kappa^2, the stationary Psi_2 constant."""
    if kappa <= 0.0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return (p.net_growth - 0.5 * p.eta**2) / kappa**2


def merton_value(l: float, kappa: float, p: MarketParams) -> float:
    """Value of the liquid-only problem, M + log(kappa*l)/kappa."""
    if l <= 0.0:
        raise DomainError(f"liquid wealth must be > 0, got {l}")
    return merton_constant(kappa, p) + math.log(kappa * l) / kappa


def merton_policies(l: float, kappa: float, p: MarketParams) -> tuple[float, float]:
    """Merton feedback policies (pi, c) = (l (alpha - r)/sigma^2, kappa l)."""
    if l <= 0.0:
        raise DomainError(f"liquid wealth must be > 0, got {l}")
    if kappa <= 0.0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return l * p.excess_return / p.sigma**2, kappa * l


def merton_curve(z: np.ndarray, kappa: float, p: MarketParams) -> np.ndarray:
    """Reduced value M - K + log(kappa z)/kappa; exact when delta = 0."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("z must be > 0")
    return merton_constant(kappa, p) - reduction_constant(kappa, p) + np.log(kappa * z) / kappa
