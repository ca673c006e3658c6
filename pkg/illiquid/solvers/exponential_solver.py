"""
Stationary solver for an exponentially distributed liquidation time.

With tau ~ Exp(kappa) the value function factors as

    V(t, l, h) = e^{-kappa t} [v(l/h) + log(h)/kappa + K],
    K = (mu - delta - eta^2/2) / kappa^2,

and v solves

    kappa v = -C v'^2/v'' + d2 z^2 v'' + d3 z v' + delta v' - 1 - log v'.

The equation is solved by Howard policy iteration on a log-uniform z grid.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..errors import ConcavityError, DomainError, NonConvergenceError
from ..liquidation import ExponentialLaw
from ..market_model import (
    derived_constants,
    merton_constant,
    merton_curve,
    reduction_constant,
    require_solvable,
)
from ..models import MarketParams
from .base_solver import BaseSolver
from .grids import ZGrid
from .scheme import LogGridOperator, check_shape, controls, generator, hamiltonian

logger = logging.getLogger(__name__)

UPPER_BOUND_CAP = 1e6


@dataclass(frozen=True, eq=False)
class ValueCurve:
    """Solved stationary reduced value v(z) with its z-derivatives.

    Attributes:
        grid: z nodes
        v: v at every node
        vz: v'(z) at every node, > 0
        vzz: v''(z) at every node, < 0
        kappa: Liquidation rate the curve was solved for
        params: Market parameters the curve was solved for
        iterations: Policy iterations used
        residual: Pointwise residual of the stationary equation
    """

    grid: ZGrid
    v: np.ndarray
    vz: np.ndarray
    vzz: np.ndarray
    kappa: float
    params: MarketParams
    iterations: int = 0
    residual: Optional[np.ndarray] = None

    @cached_property
    def _x(self) -> np.ndarray:
        return self.grid.x

    @cached_property
    def _value_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self._x, self.v, extrapolate=False)

    @cached_property
    def _slope_interp(self) -> PchipInterpolator:
        # z v' > 0
        return PchipInterpolator(self._x, self.grid.nodes * self.vz, extrapolate=False)

    @cached_property
    def _curvature_interp(self) -> PchipInterpolator:
        # z^2 v'' < 0
        return PchipInterpolator(self._x, self.grid.nodes**2 * self.vzz, extrapolate=False)

    def _log_z(self, z: Any) -> np.ndarray:
        arr = np.asarray(z, dtype=float)
        if np.any(~self.grid.contains(arr)):
            raise DomainError(
                f"z outside the grid range [{self.grid.z_min:.6g}, {self.grid.z_max:.6g}]"
            )
        return np.clip(np.log(arr), self._x[0], self._x[-1])

    def value_at(self, z: Any) -> Any:
        """Monotone cubic interpolation of v in log z."""
        x = self._log_z(z)
        out = self._value_interp(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivatives_at(self, z: Any) -> tuple[Any, Any]:
        """(v', v'') at z, interpolated as z v' and z^2 v'' so their signs are kept."""
        x = self._log_z(z)
        zz = np.exp(x)
        vz = self._slope_interp(x) / zz
        vzz = self._curvature_interp(x) / zz**2
        if np.ndim(vz) == 0:
            return float(vz), float(vzz)
        return vz, vzz

    def max_residual(self) -> float:
        """Largest absolute residual over interior nodes."""
        if self.residual is None:
            return math.nan
        return float(np.max(np.abs(self.residual[1:-1])))

    def policy_ratios(self) -> tuple[np.ndarray, np.ndarray]:
        """(pi/l, c/l) at every node."""
        z = self.grid.nodes
        p = self.params
        ratio = z * self.vzz / self.vz
        pi_over_l = (p.eta * p.rho * p.sigma - p.hedged_excess_return / ratio) / p.sigma**2
        c_over_l = 1.0 / (z * self.vz)
        return pi_over_l, c_over_l


def curve_residual(
    p: MarketParams, kappa: float, z: np.ndarray, v: np.ndarray, vz: np.ndarray, vzz: np.ndarray
) -> np.ndarray:
    """-C v'^2/v'' + d2 z^2 v'' + d3 z v' + delta v' - 1 - log v' - kappa v, pointwise."""
    coeffs = derived_constants(p)
    return (
        -coeffs.quadratic * vz**2 / vzz
        + coeffs.d2 * z**2 * vzz
        + coeffs.d3 * z * vz
        + p.delta * vz
        - 1.0
        - np.log(vz)
        - kappa * v
    )


def solve_stationary(
    p: MarketParams,
    kappa: float,
    grid: ZGrid,
    tol: float = 1e-8,
    max_iter: int = 200,
    concavity_floor: float = 1e-14,
) -> ValueCurve:
    """Solve the stationary reduced equation by policy iteration.

    Each iteration freezes (pi/l, c/l) at the maximisers of the current
    iterate, solves the linear system and stops once the sup-norm update is
    below tol. The iteration starts from the Merton curve.

    Args:
        p: Market parameters
        kappa: Liquidation rate, > 0
        grid: z grid
        tol: Sup-norm update tolerance
        max_iter: Largest number of policy iterations
        concavity_floor: Lower bound on -z v''/v' used when building controls

    Returns:
        ValueCurve

    Raises:
        InvalidParametersError: Market invariants other than the drift condition
        NonConvergenceError: No convergence within max_iter
        ConcavityError: Monotonicity or concavity lost
    """
    require_solvable(p)
    if kappa <= 0.0:
        raise DomainError(f"kappa must be > 0, got {kappa}")

    op = LogGridOperator(grid)
    z = grid.nodes
    slope = 1.0 / kappa
    u = merton_curve(z, kappa, p)
    mode = op.central_mode()
    update = math.inf

    logger.info(f"Stationary solve: kappa={kappa}, N={grid.size}, tol={tol:g}")
    for iteration in range(1, max_iter + 1):
        ux, uxx = op.derivatives(u, mode, slope, slope)
        pi_over_l, c_over_l, clamped = controls(p, ux, uxx, 1.0, concavity_floor)
        if clamped.any():
            logger.debug(f"iteration {iteration}: curvature clamped at {int(clamped.sum())} nodes")
        diffusion, drift = generator(p, z, pi_over_l, c_over_l)
        mode = op.select_mode(diffusion, drift)
        ab, const = op.assemble(kappa, diffusion, drift, mode, slope, slope)
        u_new = op.solve(ab, np.log(z / ux) + const)
        update = float(np.max(np.abs(u_new - u)))
        u = u_new
        logger.debug(f"iteration {iteration}: update {update:.3e}")
        if update < tol:
            break
    else:
        raise NonConvergenceError(
            f"policy iteration did not converge in {max_iter} iterations "
            f"(last update {update:.3e})",
            iterations=max_iter,
            update=update,
        )

    ux, uxx = op.derivatives(u, mode, slope, slope)
    check_shape(ux, uxx)
    ratio = (uxx - ux) / ux
    clamped = ratio > -concavity_floor
    if clamped.any():
        node = int(np.flatnonzero(clamped)[0])
        raise ConcavityError(
            f"curvature floor still active at {int(clamped.sum())} nodes after convergence",
            node=node,
        )
    residual = hamiltonian(derived_constants(p), p, z, ux, uxx) - 1.0 - np.log(ux / z) - kappa * u

    curve = ValueCurve(
        grid=grid,
        v=u,
        vz=ux / z,
        vzz=(uxx - ux) / z**2,
        kappa=kappa,
        params=p,
        iterations=iteration,
        residual=residual,
    )
    logger.info(
        f"Stationary solve converged in {iteration} iterations "
        f"(update {update:.2e}, max residual {curve.max_residual():.2e})"
    )
    return curve


def second_derivative_root(
    v: float, vz: float, z: float, p: MarketParams, kappa: float
) -> float:
    """Negative root v'' of the stationary equation read as a quadratic in v''.

    Multiplying through by v'' gives A v''^2 + B v'' + C0 = 0 with
    A = d2 z^2, B = d3 z v' + delta v' - 1 - log v' - kappa v and
    C0 = -C v'^2.

    Raises:
        DomainError: v' <= 0, z <= 0, C = 0 or negative discriminant
    """
    if vz <= 0.0:
        raise DomainError(f"v' must be > 0, got {vz}")
    if z <= 0.0:
        raise DomainError(f"z must be > 0, got {z}")
    coeffs = derived_constants(p)
    if coeffs.quadratic == 0.0:
        raise DomainError("d1 = 0: the equation is not quadratic in v''")
    a = coeffs.d2 * z**2
    b = coeffs.d3 * z * vz + p.delta * vz - 1.0 - math.log(vz) - kappa * v
    c0 = -coeffs.quadratic * vz**2
    disc = b * b - 4.0 * a * c0
    if disc < 0.0:
        raise DomainError(
            f"negative discriminant {disc:.3e} at v={v}, v'={vz}, z={z}"
        )
    root = math.sqrt(disc)
    if b >= 0.0:
        return (-b - root) / (2.0 * a)
    return 2.0 * c0 / (-b + root)


def reconstruct_value(
    t: float, l: float, h: float, curve: ValueCurve, p: MarketParams, kappa: float
) -> float:
    """V(t, l, h) = e^{-kappa t} [v(l/h) + log(h)/kappa + K]."""
    if t < 0.0:
        raise DomainError(f"t must be >= 0, got {t}")
    if l <= 0.0 or h <= 0.0:
        raise DomainError(f"l and h must be > 0, got l={l}, h={h}")
    v = curve.value_at(l / h)
    return math.exp(-kappa * t) * (v + math.log(h) / kappa + reduction_constant(kappa, p))


def policies(curve: ValueCurve, l: float, h: float, p: MarketParams) -> tuple[float, float]:
    """Optimal feedback (pi*, c*) at liquid wealth l and illiquid wealth h.

    Raises:
        DomainError: l/h outside the grid or derivative signs violated
    """
    if l <= 0.0 or h <= 0.0:
        raise DomainError(f"l and h must be > 0, got l={l}, h={h}")
    z = l / h
    vz, vzz = curve.derivatives_at(z)
    if not (vz > 0.0 and vzz < 0.0):
        raise DomainError(f"derivative signs violated at z={z}: v'={vz}, v''={vzz}")
    c_star = h / vz
    pi_star = h * (p.eta * p.rho * p.sigma * z - p.hedged_excess_return * vz / vzz) / p.sigma**2
    return pi_star, c_star


def fit_upper_bound_constant(
    curve: ValueCurve, p: MarketParams, kappa: float, delta: float
) -> float:
    """Smallest C1 >= 0 with V(l, 1) <= M + log(kappa (l + C1 delta))/kappa on the grid.

    Returns math.inf when no finite C1 up to 1e6 works.
    """
    z = curve.grid.nodes
    value = curve.v + reduction_constant(kappa, p)
    with np.errstate(over="ignore"):
        shifted = np.exp(kappa * (value - merton_constant(kappa, p))) / kappa
    excess = shifted - z
    # rounding level of the solve
    excess = np.where(excess <= 1e-9 * z, 0.0, excess)
    need = float(np.max(excess))
    if not math.isfinite(need):
        return math.inf
    if need <= 0.0:
        return 0.0
    if delta <= 0.0:
        logger.warning(f"delta = 0 but the value exceeds Merton by {need:.3e}")
        return math.inf
    c1 = need / delta
    return c1 if c1 <= UPPER_BOUND_CAP else math.inf


@dataclass(frozen=True)
class Envelope:
    """Log-type minorant and power-type majorant of a value curve.

    minorant(z) = lower_shift + lower_scale log(z + lower_offset)
    majorant(z) = upper_shift + (z + upper_offset)^gamma
    """

    lower_shift: float
    lower_scale: float
    lower_offset: float
    upper_shift: float
    upper_offset: float
    gamma: float
    strict: bool = field(default=False)

    def minorant(self, z: Any) -> Any:
        return self.lower_shift + self.lower_scale * np.log(np.asarray(z) + self.lower_offset)

    def majorant(self, z: Any) -> Any:
        return self.upper_shift + (np.asarray(z) + self.upper_offset) ** self.gamma


def fit_envelope(curve: ValueCurve, gamma: float = 0.9, offset: float = 1.0) -> Envelope:
    """Fit C1 log(z + C2) below and (z + C3)^gamma above the solved curve.

    The log scale is the asymptotic slope 1/kappa and the offsets are fixed;
    the additive shifts are chosen so both bounds touch the curve within a
    small margin, and `strict` reports whether the curve lies strictly between
    them on the interior.
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    z = curve.grid.nodes
    v = curve.v
    margin = 1e-6 * (1.0 + float(np.max(np.abs(v))))
    scale = 1.0 / curve.kappa
    lower_shift = float(np.min(v - scale * np.log(z + offset))) - margin
    upper_shift = float(np.max(v - (z + offset) ** gamma)) + margin
    envelope = Envelope(
        lower_shift=lower_shift,
        lower_scale=scale,
        lower_offset=offset,
        upper_shift=upper_shift,
        upper_offset=offset,
        gamma=gamma,
    )
    inner = slice(1, -1)
    strict = bool(
        np.all(envelope.minorant(z[inner]) < v[inner])
        and np.all(v[inner] < envelope.majorant(z[inner]))
    )
    return replace(envelope, strict=strict)


class ExponentialSolver(BaseSolver):
    """Stationary solve for an exponential liquidation law."""

    name = "exponential"

    def __init__(
        self,
        params: MarketParams,
        law: ExponentialLaw,
        grid: ZGrid,
        tol: float = 1e-8,
        max_iter: int = 200,
        concavity_floor: float = 1e-14,
    ):
        super().__init__()
        self.params = params
        self.law = law
        self.grid = grid
        self.tol = tol
        self.max_iter = max_iter
        self.concavity_floor = concavity_floor

    def execute_solve(self) -> ValueCurve:
        return solve_stationary(
            self.params,
            self.law.kappa,
            self.grid,
            tol=self.tol,
            max_iter=self.max_iter,
            concavity_floor=self.concavity_floor,
        )

    def summarize(self, result: ValueCurve) -> dict[str, Any]:
        return {
            "kappa": result.kappa,
            "n_nodes": result.grid.size,
            "iterations": result.iterations,
            "max_residual": result.max_residual(),
        }
