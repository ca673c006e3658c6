"""
Time-stepping solver for a Weibull distributed liquidation time.

The reduced function W(t, z) of

    V(t, l, h) = W(t, z) + Psi_1(t) log h + Psi_2(t)

solves

    W_t - C W_z^2/W_zz + d2 z^2 W_zz + d3 z W_z + delta W_z - S(t) log W_z = 0,

with S the survival function. It is integrated backward in time from T_max
with implicit Euler steps and policy iteration inside each step. An
exponential law is accepted as well; it then reproduces the stationary solve.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..errors import ConcavityError, DomainError, NonConvergenceError
from ..liquidation import ExponentialLaw, WeibullLaw, psi2, psi2_on, theta, theta_on
from ..market_model import derived_constants, require_solvable
from ..models import MarketParams
from .base_solver import BaseSolver
from .grids import TimeGrid, ZGrid
from .scheme import LogGridOperator, check_shape, controls, generator, hamiltonian

logger = logging.getLogger(__name__)

Law = Union[ExponentialLaw, WeibullLaw]

# Survival level below which c*/l = S/W_z is ill-conditioned
TINY_SURVIVAL = 1e-12


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """W and its z-derivatives on the (t, z) grid.

    Arrays are indexed [time node, z node].
    """

    zgrid: ZGrid
    tgrid: TimeGrid
    W: np.ndarray
    Wz: np.ndarray
    Wzz: np.ndarray
    law: Law
    params: MarketParams
    residual: Optional[np.ndarray] = None
    inner_iterations: Optional[np.ndarray] = None

    def max_residual(self) -> float:
        """Largest absolute residual over interior nodes and all steps."""
        if self.residual is None:
            return math.nan
        return float(np.max(np.abs(self.residual)))

    def _log_z(self, z: Any) -> np.ndarray:
        arr = np.asarray(z, dtype=float)
        if np.any(~self.zgrid.contains(arr)):
            raise DomainError(
                f"z outside the grid range [{self.zgrid.z_min:.6g}, {self.zgrid.z_max:.6g}]"
            )
        x = self.zgrid.x
        return np.clip(np.log(arr), x[0], x[-1])

    def _blend(self, rows: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
        """PCHIP in log z on the two bracketing slices, linear in t."""
        i, w = self.tgrid.locate(t)
        nodes = self.zgrid.x
        lower = PchipInterpolator(nodes, rows[i], extrapolate=False)(x)
        if w == 0.0:
            return lower
        upper = PchipInterpolator(nodes, rows[i + 1], extrapolate=False)(x)
        return (1.0 - w) * lower + w * upper

    def value_at(self, t: float, z: Any) -> Any:
        out = self._blend(self.W, t, self._log_z(z))
        return float(out) if np.ndim(out) == 0 else out

    def derivatives_at(self, t: float, z: Any) -> tuple[Any, Any]:
        """(W_z, W_zz) at (t, z), interpolated as z W_z and z^2 W_zz."""
        x = self._log_z(z)
        nodes = self.zgrid.nodes
        zz = np.exp(x)
        wz = self._blend(nodes * self.Wz, t, x) / zz
        wzz = self._blend(nodes**2 * self.Wzz, t, x) / zz**2
        if np.ndim(wz) == 0:
            return float(wz), float(wzz)
        return wz, wzz

    def policy_ratios(self) -> tuple[np.ndarray, np.ndarray]:
        """(pi/l, c/l) on the full grid, shape (M + 1, N)."""
        p = self.params
        z = self.zgrid.nodes
        ratio = z * self.Wzz / self.Wz
        pi_over_l = (p.eta * p.rho * p.sigma - p.hedged_excess_return / ratio) / p.sigma**2
        survival = np.asarray(self.law.survival(self.tgrid.nodes))[:, None]
        c_over_l = survival / (z * self.Wz)
        return pi_over_l, c_over_l

    def lower_bound_gap(self) -> np.ndarray:
        """W - (Psi_1 log z + Theta - Psi_2) on the full grid."""
        t = self.tgrid.nodes
        z = self.zgrid.nodes
        ps1 = np.asarray(self.law.psi1(t))[:, None]
        th = theta_on(self.law, t, self.params)[:, None]
        ps2 = psi2_on(self.law, t, self.params)[:, None]
        return self.W - (ps1 * np.log(z)[None, :] + th - ps2)


def terminal_condition(
    z: Any, law: Law, p: MarketParams, t_max: Optional[float] = None
) -> Any:
    """Psi_1(T) log z + Theta(T) - Psi_2(T), the lower bound used at T_max.

    T_max defaults to the time where survival drops below 1e-10.
    """
    if t_max is None:
        t_max = law.horizon(1e-10)
    arr = np.asarray(z, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError("z must be > 0")
    value = law.psi1(t_max) * np.log(arr) + theta(law, t_max, p) - psi2(law, t_max, p)
    return float(value) if np.ndim(value) == 0 else value


def solve_parabolic(
    p: MarketParams,
    law: Law,
    zgrid: ZGrid,
    tgrid: TimeGrid,
    tol: float = 1e-8,
    inner_max_iter: int = 50,
    concavity_floor: float = 1e-14,
) -> ValueSurface:
    """Integrate the reduced equation backward from T_max = tgrid.t_max.

    Each step solves

        W^n/dt - L W^n = W^{n+1}/dt + S(t_n) (log(z/u_x) + 1)

    with the controls of L and u_x taken from the previous inner iterate,
    repeating until two successive inner iterates agree to tol.

    Raises:
        NonConvergenceError: Inner iteration exhausted (carries the time), or a
            final residual above 10*tol
        ConcavityError: Monotonicity or concavity lost (carries node and time)
    """
    require_solvable(p)
    op = LogGridOperator(zgrid)
    coeffs = derived_constants(p)
    z = zgrid.nodes
    t = tgrid.nodes
    n_steps = tgrid.n_steps
    survival = np.asarray(law.survival(t), dtype=float)
    slopes = np.asarray(law.psi1(t), dtype=float)

    W = np.empty((n_steps + 1, z.size))
    UX = np.empty_like(W)
    UXX = np.empty_like(W)
    residual = np.zeros(n_steps)
    inner = np.zeros(n_steps, dtype=int)

    logger.info(
        f"Parabolic solve: {law.law} law, T_max={tgrid.t_max:.4g}, "
        f"{n_steps} steps, N={zgrid.size}"
    )
    u = terminal_condition(z, law, p, t_max=tgrid.t_max)
    mode = op.central_mode()
    W[-1] = u
    UX[-1], UXX[-1] = op.derivatives(u, mode, slopes[-1], slopes[-1])

    for n in range(n_steps - 1, -1, -1):
        dt = t[n + 1] - t[n]
        weight = survival[n]
        slope = slopes[n]
        u_next = W[n + 1]
        iterate = u_next
        previous = None
        for it in range(1, inner_max_iter + 1):
            ux, uxx = op.derivatives(iterate, mode, slope, slope)
            pi_over_l, c_over_l, _ = controls(p, ux, uxx, weight, concavity_floor, time=t[n])
            diffusion, drift = generator(p, z, pi_over_l, c_over_l)
            mode = op.select_mode(diffusion, drift)
            ab, const = op.assemble(1.0 / dt, diffusion, drift, mode, slope, slope)
            rhs = u_next / dt + weight * (np.log(z / ux) + 1.0) + const
            solution = op.solve(ab, rhs)
            if previous is not None and np.max(np.abs(solution - previous)) < tol:
                break
            previous = solution
            iterate = solution
        else:
            raise NonConvergenceError(
                f"inner policy iteration did not converge at t={t[n]:.6g}",
                iterations=inner_max_iter,
                time=float(t[n]),
            )

        ux, uxx = op.derivatives(solution, mode, slope, slope)
        check_shape(ux, uxx, time=float(t[n]))
        clamped = (uxx - ux) / ux > -concavity_floor
        if clamped.any():
            raise ConcavityError(
                f"curvature floor active at t={t[n]:.6g}",
                node=int(np.flatnonzero(clamped)[0]),
                time=float(t[n]),
            )
        step_residual = (
            (u_next - solution) / dt
            + hamiltonian(coeffs, p, z, ux, uxx)
            - weight * np.log(ux / z)
        )
        residual[n] = float(np.max(np.abs(step_residual[1:-1])))
        inner[n] = it
        W[n], UX[n], UXX[n] = solution, ux, uxx

    surface = ValueSurface(
        zgrid=zgrid,
        tgrid=tgrid,
        W=W,
        Wz=UX / z,
        Wzz=(UXX - UX) / z**2,
        law=law,
        params=p,
        residual=residual,
        inner_iterations=inner,
    )
    worst = surface.max_residual()
    if not worst <= 10.0 * tol:
        worst_step = int(np.argmax(residual))
        raise NonConvergenceError(
            f"parabolic residual {worst:.3e} exceeds 10*tol = {10.0 * tol:.1e}",
            iterations=int(inner[worst_step]),
            update=worst,
            time=float(t[worst_step]),
        )
    logger.info(
        f"Parabolic solve finished: {int(inner.sum())} inner solves, max residual {worst:.2e}"
    )
    return surface


def policies_at(
    surface: ValueSurface, t: float, l: float, h: float, p: MarketParams, law: Law
) -> tuple[float, float]:
    """Optimal feedback (pi*, c*) at time t.

    Raises:
        DomainError: (t, l/h) outside the surface or derivative signs violated
    """
    if l <= 0.0 or h <= 0.0:
        raise DomainError(f"l and h must be > 0, got l={l}, h={h}")
    z = l / h
    wz, wzz = surface.derivatives_at(t, z)
    if not (wz > 0.0 and wzz < 0.0):
        raise DomainError(f"derivative signs violated at t={t}, z={z}: W_z={wz}, W_zz={wzz}")
    weight = float(law.survival(t))
    if weight < TINY_SURVIVAL:
        logger.warning(f"survival {weight:.2e} at t={t}: consumption ratio is ill-conditioned")
    c_star = h * weight / wz
    pi_star = h * (p.eta * p.rho * p.sigma * z - p.hedged_excess_return * wz / wzz) / p.sigma**2
    return pi_star, c_star


def reconstruct_value(
    surface: ValueSurface, t: float, l: float, h: float, law: Law, p: MarketParams
) -> float:
    """V(t, l, h) = W(t, l/h) + Psi_1(t) log h + Psi_2(t)."""
    if l <= 0.0 or h <= 0.0:
        raise DomainError(f"l and h must be > 0, got l={l}, h={h}")
    return surface.value_at(t, l / h) + law.psi1(t) * math.log(h) + psi2(law, t, p)


class WeibullSolver(BaseSolver):
    """Backward time stepping for a Weibull (or exponential) liquidation law."""

    name = "weibull"

    def __init__(
        self,
        params: MarketParams,
        law: Law,
        zgrid: ZGrid,
        tgrid: Optional[TimeGrid] = None,
        tol: float = 1e-8,
        inner_max_iter: int = 50,
        concavity_floor: float = 1e-14,
    ):
        super().__init__()
        self.params = params
        self.law = law
        self.zgrid = zgrid
        self.tgrid = tgrid if tgrid is not None else TimeGrid.for_law(law)
        self.tol = tol
        self.inner_max_iter = inner_max_iter
        self.concavity_floor = concavity_floor

    def execute_solve(self) -> ValueSurface:
        return solve_parabolic(
            self.params,
            self.law,
            self.zgrid,
            self.tgrid,
            tol=self.tol,
            inner_max_iter=self.inner_max_iter,
            concavity_floor=self.concavity_floor,
        )

    def summarize(self, result: ValueSurface) -> dict[str, Any]:
        return {
            "law": result.law.model_dump(by_alias=True),
            "t_max": result.tgrid.t_max,
            "n_steps": result.tgrid.n_steps,
            "n_nodes": result.zgrid.size,
            "max_residual": result.max_residual(),
        }
