"""
Liquidation-time laws and the auxiliary time functions Psi_1, Psi_2 and Theta.

Psi_1(t) is the tail integral of the survival function. Psi_2 and Theta are the
tail integrals fixed by

    Psi_2' + (mu - delta - eta^2/2) Psi_1 + S (log S - 1) = 0,
    Theta' + Psi_1 (r + (alpha - r)^2 / (2 sigma^2)) - S (1 - log S + log Psi_1) = 0,

with S the survival function and both functions vanishing as t -> infinity.
They are evaluated by adaptive quadrature; the closed forms printed for the
Weibull case are kept only for comparison.
"""
import logging
import math
import sys
from typing import Annotated, Callable, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, special

from .errors import DomainError
from .market_model import merton_constant, reduction_constant
from .models import MarketParams

logger = logging.getLogger(__name__)

TAIL_CUTOFF = 1e-14
TAIL_CAP = 1e4
GAMMA_EPS = 1e-16
GAMMA_MAX_ITER = 2000
FPMIN = sys.float_info.min / sys.float_info.epsilon

ArrayLike = Union[float, np.ndarray]


def _as_time(t: ArrayLike) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0):
        raise DomainError(f"time must be >= 0, got {t}")
    return arr


def _out(arr: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(arr) if np.ndim(like) == 0 else arr


# ========== Incomplete gamma ==========

def _gamma_series(a: float, x: float) -> float:
    """Regularised lower incomplete gamma P(a, x) by its power series."""
    if x == 0.0:
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * GAMMA_EPS:
            return total * math.exp(-x + a * math.log(x) - special.gammaln(a))
    raise ArithmeticError(f"incomplete gamma series did not converge for a={a}, x={x}")


def _log_gamma_continued_fraction(a: float, x: float) -> float:
    """log Gamma(a, x) from the modified Lentz evaluation of its continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < FPMIN:
            d = FPMIN
        c = b + an / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < GAMMA_EPS:
            return -x + a * math.log(x) + math.log(h)
    raise ArithmeticError(f"incomplete gamma fraction did not converge for a={a}, x={x}")


def _log_upper_gamma_scalar(a: float, x: float) -> float:
    if not a > 0.0:
        raise DomainError(f"incomplete gamma needs a > 0, got {a}")
    if not x >= 0.0:
        raise DomainError(f"incomplete gamma needs x >= 0, got {x}")
    if x < a + 1.0:
        return float(special.gammaln(a) + math.log1p(-_gamma_series(a, x)))
    return _log_gamma_continued_fraction(a, x)


_log_upper_gamma = np.vectorize(_log_upper_gamma_scalar, otypes=[float])


def log_upper_incomplete_gamma(a: ArrayLike, x: ArrayLike) -> ArrayLike:
    """log of the upper incomplete gamma function, finite far into the tail."""
    result = _log_upper_gamma(a, x)
    return float(result) if np.ndim(result) == 0 else result


def upper_incomplete_gamma(a: ArrayLike, x: ArrayLike) -> ArrayLike:
    """Gamma(a, x) = integral_x^inf s^(a-1) e^(-s) ds.

    Series expansion for x < a + 1, continued fraction otherwise; relative
    accuracy better than 1e-10.

    Raises:
        DomainError: a <= 0 or x < 0
    """
    result = np.exp(_log_upper_gamma(a, x))
    return float(result) if np.ndim(result) == 0 else result


# ========== Laws ==========

class ExponentialLaw(BaseModel):
    """Exponentially distributed liquidation time with rate kappa"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    law: Literal["exponential"] = "exponential"
    kappa: float = Field(..., gt=0.0, description="Liquidation rate (1/time)")

    @property
    def scale(self) -> float:
        return 1.0 / self.kappa

    def mean(self) -> float:
        return 1.0 / self.kappa

    def survival(self, t: ArrayLike) -> ArrayLike:
        return _out(np.exp(-self.kappa * _as_time(t)), t)

    def log_survival(self, t: ArrayLike) -> ArrayLike:
        return _out(-self.kappa * _as_time(t), t)

    def pdf(self, t: ArrayLike) -> ArrayLike:
        return _out(self.kappa * np.exp(-self.kappa * _as_time(t)), t)

    def psi1(self, t: ArrayLike) -> ArrayLike:
        return _out(np.exp(-self.kappa * _as_time(t)) / self.kappa, t)

    def log_psi1(self, t: ArrayLike) -> ArrayLike:
        return _out(-self.kappa * _as_time(t) - math.log(self.kappa), t)

    def sample_tau(self, u: ArrayLike) -> ArrayLike:
        """Inverse-CDF draw from uniforms in (0, 1]."""
        return -np.log(u) / self.kappa

    def horizon(self, cutoff: float) -> float:
        """Smallest t with survival(t) < cutoff."""
        return -math.log(cutoff) / self.kappa

    def reduction_constant(self, p: MarketParams) -> float:
        """Time-independent constant of the stationary reduction."""
        return reduction_constant(self.kappa, p)


class WeibullLaw(BaseModel):
    """Weibull distributed liquidation time with scale lambda and shape k >= 1"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, populate_by_name=True)

    law: Literal["weibull"] = "weibull"
    lambda_: float = Field(..., gt=0.0, alias="lambda", description="Scale (time)")
    k: float = Field(..., ge=1.0, description="Shape; k = 1 is the exponential law")

    @property
    def scale(self) -> float:
        return self.lambda_

    def mean(self) -> float:
        return self.lambda_ * math.gamma(1.0 + 1.0 / self.k)

    def _x(self, t: np.ndarray) -> np.ndarray:
        return (t / self.lambda_) ** self.k

    def survival(self, t: ArrayLike) -> ArrayLike:
        return _out(np.exp(-self._x(_as_time(t))), t)

    def log_survival(self, t: ArrayLike) -> ArrayLike:
        return _out(-self._x(_as_time(t)), t)

    def pdf(self, t: ArrayLike) -> ArrayLike:
        arr = _as_time(t)
        ratio = arr / self.lambda_
        density = (self.k / self.lambda_) * ratio ** (self.k - 1.0) * np.exp(-(ratio**self.k))
        return _out(density, t)

    def psi1(self, t: ArrayLike) -> ArrayLike:
        return _out(np.exp(np.asarray(self.log_psi1(t))), t)

    def log_psi1(self, t: ArrayLike) -> ArrayLike:
        x = self._x(_as_time(t))
        return _out(
            math.log(self.lambda_ / self.k) + _log_upper_gamma(1.0 / self.k, x), t
        )

    def sample_tau(self, u: ArrayLike) -> ArrayLike:
        """Inverse-CDF draw from uniforms in (0, 1]."""
        return self.lambda_ * (-np.log(u)) ** (1.0 / self.k)

    def horizon(self, cutoff: float) -> float:
        """Smallest t with survival(t) < cutoff."""
        return self.lambda_ * (-math.log(cutoff)) ** (1.0 / self.k)


LiquidationLaw = Annotated[Union[ExponentialLaw, WeibullLaw], Field(discriminator="law")]


# ========== Operations on laws ==========

def survival(law: LiquidationLaw, t: ArrayLike) -> ArrayLike:
    """Probability that liquidation has not happened by t."""
    return law.survival(t)


def pdf(law: LiquidationLaw, t: ArrayLike) -> ArrayLike:
    """Density of the liquidation time, equal to -d/dt survival."""
    return law.pdf(t)


def psi1(law: LiquidationLaw, t: ArrayLike) -> ArrayLike:
    """Tail integral of the survival function from t to infinity."""
    return law.psi1(t)


def t_cut(law: LiquidationLaw) -> float:
    """Practical infinity: survival below 1e-14, capped at 1e4 scales."""
    return min(law.horizon(TAIL_CUTOFF), TAIL_CAP * law.scale)


def _psi2_integrand(law: LiquidationLaw, p: MarketParams) -> Callable[[float], float]:
    growth = p.net_growth - 0.5 * p.eta**2

    def integrand(s: float) -> float:
        surv = law.survival(s)
        return growth * law.psi1(s) + surv * (law.log_survival(s) - 1.0)

    return integrand


def _theta_integrand(law: LiquidationLaw, p: MarketParams) -> Callable[[float], float]:
    merton_rate = p.r + 0.5 * p.excess_return**2 / p.sigma**2

    def integrand(s: float) -> float:
        surv = law.survival(s)
        return merton_rate * law.psi1(s) - surv * (
            1.0 - law.log_survival(s) + law.log_psi1(s)
        )

    return integrand


def _quad(f: Callable[[float], float], a: float, b: float) -> float:
    if b <= a:
        return 0.0
    value, _ = integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-12, limit=400)
    return value


def _tail(f: Callable[[float], float], law: LiquidationLaw, t: ArrayLike) -> ArrayLike:
    arr = _as_time(t)
    end = t_cut(law)
    values = np.array([_quad(f, float(s), end) for s in arr.ravel()]).reshape(arr.shape)
    return _out(values, t)


def _tail_on(
    f: Callable[[float], float], law: LiquidationLaw, t_nodes: np.ndarray
) -> np.ndarray:
    nodes = _as_time(t_nodes)
    if np.any(np.diff(nodes) <= 0.0):
        raise DomainError("time nodes must be strictly increasing")
    end = t_cut(law)
    clipped = np.minimum(nodes, end)
    pieces = np.array([_quad(f, a, b) for a, b in zip(clipped[:-1], clipped[1:])])
    last = _quad(f, float(clipped[-1]), end)
    tails = np.empty_like(nodes)
    tails[-1] = last
    tails[:-1] = last + np.cumsum(pieces[::-1])[::-1]
    return tails


def psi2(law: LiquidationLaw, t: ArrayLike, p: MarketParams) -> ArrayLike:
    """Psi_2(t) by quadrature of its ODE with Psi_2(inf) = 0."""
    return _tail(_psi2_integrand(law, p), law, t)


def theta(law: LiquidationLaw, t: ArrayLike, p: MarketParams) -> ArrayLike:
    """Theta(t) by quadrature of its ODE from T_cut down to t."""
    return _tail(_theta_integrand(law, p), law, t)


def psi2_on(law: LiquidationLaw, t_nodes: np.ndarray, p: MarketParams) -> np.ndarray:
    """Psi_2 on increasing nodes by interval quadrature and a reverse cumulative sum."""
    return _tail_on(_psi2_integrand(law, p), law, t_nodes)


def theta_on(law: LiquidationLaw, t_nodes: np.ndarray, p: MarketParams) -> np.ndarray:
    """Theta on increasing nodes by interval quadrature and a reverse cumulative sum."""
    return _tail_on(_theta_integrand(law, p), law, t_nodes)


def psi2_closed_form(law: LiquidationLaw, t: ArrayLike, p: MarketParams) -> ArrayLike:
    """Closed form of Psi_2 used only as a cross-check.

    Exact for the exponential law. For the Weibull law this is the expression
    printed alongside that case, evaluated as written.
    """
    arr = _as_time(t)
    if isinstance(law, ExponentialLaw):
        kappa = law.kappa
        value = np.exp(-kappa * arr) * (reduction_constant(kappa, p) - arr - 2.0 / kappa)
        return _out(value, t)
    x = (arr / law.lambda_) ** law.k
    gamma_term = (law.lambda_ / law.k) * np.exp(_log_upper_gamma(1.0 / law.k, x))
    value = -(p.net_growth - 0.5 * p.eta**2) * gamma_term + np.exp(-x) * (x + 1.0)
    return _out(value, t)


def theta_closed_form(law: LiquidationLaw, t: ArrayLike, p: MarketParams) -> ArrayLike:
    """Closed form of Theta used only as a cross-check.

    Exact for the exponential law; the Weibull expression is evaluated as
    printed, including its (t/k)^k term.
    """
    arr = _as_time(t)
    if isinstance(law, ExponentialLaw):
        kappa = law.kappa
        value = np.exp(-kappa * arr) * (merton_constant(kappa, p) + math.log(kappa) / kappa)
        return _out(value, t)
    x = (arr / law.lambda_) ** law.k
    log_psi = math.log(law.lambda_ / law.k) + _log_upper_gamma(1.0 / law.k, x)
    merton_rate = p.r + 0.5 * p.excess_return**2 / p.sigma**2
    value = -merton_rate * np.exp(log_psi) + np.exp(-x) * (
        np.exp(-x) + (arr / law.k) ** law.k + log_psi
    )
    return _out(value, t)


def asymptotic_psi(law: WeibullLaw, t: float) -> tuple[float, float, float]:
    """Leading-order tails of (Psi_1, Psi_2, Theta) for a Weibull law with k > 1.

    The Theta expression mixes the dimensional lambda with the dimensionless k
    in (lambda - k)/(lambda k); it is evaluated verbatim, multiplied out so that
    lambda = k stays finite.

    Raises:
        DomainError: exponential law, k = 1, or t <= 0
    """
    if not isinstance(law, WeibullLaw) or law.k <= 1.0:
        raise DomainError("asymptotic tails are only defined for Weibull laws with k > 1")
    if t <= 0.0:
        raise DomainError(f"t must be > 0, got {t}")
    if t / law.lambda_ < 4.0:
        logger.warning(f"asymptotic tails requested at t/lambda = {t / law.lambda_:.3g} < 4")
    lam, k = law.lambda_, law.k
    decay = math.exp(-((t / lam) ** k))
    psi1_asym = (lam**k / k) * t ** (1.0 - k) * decay
    psi2_asym = -(1.0 / k) * t * decay
    theta_asym = t * decay * ((lam - k) / (lam * k) + (k - 1.0) * t ** (-k) * math.log(t))
    return psi1_asym, psi2_asym, theta_asym
