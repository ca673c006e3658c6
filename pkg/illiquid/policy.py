"""
Feedback policies (pi, c) as functions of (t, l, h), used by the simulator.
"""
import logging
from typing import Protocol, Union, runtime_checkable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .liquidation import ExponentialLaw, WeibullLaw
from .models import MarketParams
from .solvers.exponential_solver import ValueCurve
from .solvers.weibull_solver import ValueSurface

logger = logging.getLogger(__name__)

Law = Union[ExponentialLaw, WeibullLaw]


@runtime_checkable
class PolicyField(Protocol):
    """Vectorised feedback policy.

    Attributes:
        z_min: Smallest l/h where the policy is defined; paths below it are aborted
    """

    z_min: float

    def evaluate(
        self, t: float, l: np.ndarray, h: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return (pi, c) for arrays of liquid and illiquid wealth at time t."""
        ...


class RatioPolicy:
    """Stationary policy from tabulated ratios, e.g. a curve CSV."""

    def __init__(self, z: np.ndarray, pi_over_l: np.ndarray, c_over_l: np.ndarray):
        z = np.asarray(z, dtype=float)
        self.z_min = float(z[0])
        self._x = np.log(z)
        self._pi = PchipInterpolator(self._x, np.asarray(pi_over_l, dtype=float), extrapolate=False)
        self._c = PchipInterpolator(self._x, np.asarray(c_over_l, dtype=float), extrapolate=False)

    def evaluate(self, t: float, l: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.clip(np.log(np.maximum(l, 1e-300) / h), self._x[0], self._x[-1])
        return self._pi(x) * l, self._c(x) * l


class CurvePolicy(RatioPolicy):
    """Stationary policy read off a solved ValueCurve.

    Ratios pi/l and c/l are interpolated monotonically in log z and held
    constant beyond the last node.
    """

    def __init__(self, curve: ValueCurve):
        pi_over_l, c_over_l = curve.policy_ratios()
        super().__init__(curve.grid.nodes, pi_over_l, c_over_l)
        self.curve = curve


class SurfacePolicy:
    """Time-dependent policy read off a ValueSurface, bilinear in (t, log z)."""

    def __init__(self, surface: ValueSurface):
        self.surface = surface
        self.z_min = surface.zgrid.z_min
        self._x = surface.zgrid.x
        self._t = surface.tgrid.nodes
        self._pi, self._c = surface.policy_ratios()

    def _bilinear(self, table: np.ndarray, i: int, w: float, x: np.ndarray) -> np.ndarray:
        j = np.clip(np.searchsorted(self._x, x, side="right") - 1, 0, self._x.size - 2)
        s = (x - self._x[j]) / (self._x[j + 1] - self._x[j])
        lower = (1.0 - s) * table[i, j] + s * table[i, j + 1]
        upper = (1.0 - s) * table[i + 1, j] + s * table[i + 1, j + 1]
        return (1.0 - w) * lower + w * upper

    def evaluate(self, t: float, l: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = min(max(t, 0.0), float(self._t[-1]))
        i = int(np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, self._t.size - 2))
        w = (t - self._t[i]) / (self._t[i + 1] - self._t[i])
        x = np.clip(np.log(np.maximum(l, 1e-300) / h), self._x[0], self._x[-1])
        return self._bilinear(self._pi, i, w, x) * l, self._bilinear(self._c, i, w, x) * l


class MertonPolicy:
    """Liquid-only benchmark: pi/l = (alpha - r)/sigma^2, c/l = S(t)/Psi_1(t)."""

    z_min = 0.0

    def __init__(self, p: MarketParams, law: Law):
        self.pi_over_l = p.excess_return / p.sigma**2
        self.law = law

    def consumption_ratio(self, t: float) -> float:
        return float(np.exp(self.law.log_survival(t) - self.law.log_psi1(t)))

    def evaluate(self, t: float, l: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.pi_over_l * l, self.consumption_ratio(t) * l


class ScaledPolicy:
    """Another policy with pi and c multiplied by constant factors."""

    def __init__(self, base: PolicyField, pi_scale: float = 1.0, c_scale: float = 1.0):
        self.base = base
        self.pi_scale = pi_scale
        self.c_scale = c_scale
        self.z_min = base.z_min

    def evaluate(self, t: float, l: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pi, c = self.base.evaluate(t, l, h)
        return self.pi_scale * pi, self.c_scale * c


class ConstantPolicy:
    """Fixed fractions of liquid wealth."""

    z_min = 0.0

    def __init__(self, pi_over_l: float, c_over_l: float):
        self.pi_over_l = pi_over_l
        self.c_over_l = c_over_l

    def evaluate(self, t: float, l: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.pi_over_l * l, self.c_over_l * l
