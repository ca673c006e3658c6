"""
Monotone finite differences for the reduced HJB operator.

The unknown is u(x) = W(e^x) on x = log z. With the controls frozen at
m = pi/l and n = c/l the generator of z = l/h reads

    D u_xx + b u_x,
    D = (sigma^2 m^2 - 2 eta rho sigma m + eta^2) / 2,
    b = a m + eta^2 + r - (mu - delta) + delta/z - n - D,

where a = alpha - r - eta rho sigma. Interior nodes use central differences
where the resulting row keeps non-negative off-diagonals and upwinding by the
sign of b elsewhere.

Both end nodes use a linear ghost value, so u_xx = 0 there. At z_N the slope
is the asymptotic one. At z_1 the slope is the forward difference when b > 0;
otherwise the drift leaves the grid and the lower-bound slope is imposed.
Every row of shift*I - L is then an M-matrix row and the system is tridiagonal.
"""
import logging

import numpy as np
from scipy import linalg

from ..errors import ConcavityError
from ..models import DCoefficients, MarketParams
from .grids import ZGrid

logger = logging.getLogger(__name__)

BANDS = (1, 1)

CENTRAL = 0
FORWARD = 1
BACKWARD = -1


class LogGridOperator:
    """Three-point stencils on a (possibly non-uniform) log z grid.

    A stencil selection `mode` has one entry per node: mode[0] picks the
    left closure (FORWARD or BACKWARD), mode[1:-1] the interior stencils and
    mode[-1] is unused.
    """

    def __init__(self, grid: ZGrid):
        self.grid = grid
        self.z = grid.nodes
        x = grid.x
        h = np.diff(x)
        self.n = x.size
        hm, hp = h[:-1], h[1:]
        self.hm, self.hp = hm, hp
        total = hm + hp
        # first derivative, central
        self.cm = -hp / (hm * total)
        self.c0 = (hp - hm) / (hm * hp)
        self.cp = hm / (hp * total)
        # second derivative
        self.sm = 2.0 / (hm * total)
        self.s0 = -2.0 / (hm * hp)
        self.sp = 2.0 / (hp * total)
        self.h_left = h[0]

    def central_mode(self) -> np.ndarray:
        mode = np.zeros(self.n, dtype=np.int8)
        mode[0] = FORWARD
        return mode

    def derivatives(
        self, u: np.ndarray, mode: np.ndarray, slope_left: float, slope_right: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return (u_x, u_xx) at every node for the given stencil selection."""
        inner = mode[1:-1]
        um, u0, up = u[:-2], u[1:-1], u[2:]
        central = self.cm * um + self.c0 * u0 + self.cp * up
        forward = (up - u0) / self.hp
        backward = (u0 - um) / self.hm
        ux = np.empty_like(u)
        uxx = np.empty_like(u)
        ux[1:-1] = np.where(inner > 0, forward, np.where(inner < 0, backward, central))
        uxx[1:-1] = self.sm * um + self.s0 * u0 + self.sp * up
        ux[0] = (u[1] - u[0]) / self.h_left if mode[0] > 0 else slope_left
        uxx[0] = 0.0
        ux[-1] = slope_right
        uxx[-1] = 0.0
        return ux, uxx

    def select_mode(self, diffusion: np.ndarray, drift: np.ndarray) -> np.ndarray:
        """Central where monotone, upwind otherwise."""
        d, b = diffusion[1:-1], drift[1:-1]
        lower = d * self.sm + b * self.cm
        upper = d * self.sp + b * self.cp
        monotone = (lower >= 0.0) & (upper >= 0.0)
        upwind = np.where(b > 0.0, FORWARD, BACKWARD)
        mode = np.empty(self.n, dtype=np.int8)
        mode[1:-1] = np.where(monotone, CENTRAL, upwind)
        mode[0] = FORWARD if drift[0] > 0.0 else BACKWARD
        mode[-1] = BACKWARD
        return mode

    def assemble(
        self,
        shift: float,
        diffusion: np.ndarray,
        drift: np.ndarray,
        mode: np.ndarray,
        slope_left: float,
        slope_right: float,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Banded form of (shift I - L) and the boundary constant of L.

        Returns:
            ab: (3, N) array for scipy.linalg.solve_banded with (l, u) = (1, 1)
            const: vector such that L u = (band part) u + const
        """
        n = self.n
        inner = mode[1:-1]
        d, b = diffusion[1:-1], drift[1:-1]
        lm = d * self.sm + b * np.where(
            inner == CENTRAL, self.cm, np.where(inner < 0, -1.0 / self.hm, 0.0)
        )
        l0 = d * self.s0 + b * np.where(
            inner == CENTRAL, self.c0, np.where(inner < 0, 1.0 / self.hm, -1.0 / self.hp)
        )
        lp = d * self.sp + b * np.where(
            inner == CENTRAL, self.cp, np.where(inner > 0, 1.0 / self.hp, 0.0)
        )

        ab = np.zeros((3, n))
        ab[0, 2:] = -lp
        ab[1, 1:-1] = shift - l0
        ab[2, :-2] = -lm
        const = np.zeros(n)

        if mode[0] > 0:
            coupling = drift[0] / self.h_left
            ab[1, 0] = shift + coupling
            ab[0, 1] = -coupling
        else:
            ab[1, 0] = shift
            const[0] = drift[0] * slope_left

        ab[1, -1] = shift
        const[-1] = drift[-1] * slope_right
        return ab, const

    @staticmethod
    def solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        return linalg.solve_banded(BANDS, ab, rhs, check_finite=False)


def controls(
    p: MarketParams,
    ux: np.ndarray,
    uxx: np.ndarray,
    weight: float,
    floor: float,
    time: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Maximisers (pi/l, c/l) of the Hamiltonian for the given derivatives.

    The ratio z W_zz / W_z = (u_xx - u_x)/u_x is held at or below -floor;
    clamped nodes are returned as a mask.

    Raises:
        ConcavityError: u_x <= 0 somewhere (value not increasing in z)
    """
    bad = np.flatnonzero(~(ux > 0.0))
    if bad.size:
        node = int(bad[0])
        raise ConcavityError(
            f"W_z <= 0 at node {node} (u_x = {ux[node]:.3e})", node=node, time=time
        )
    ratio = (uxx - ux) / ux
    clamped = ratio > -floor
    ratio = np.where(clamped, -floor, ratio)
    pi_over_l = (p.eta * p.rho * p.sigma - p.hedged_excess_return / ratio) / p.sigma**2
    c_over_l = weight / ux
    return pi_over_l, c_over_l, clamped


def generator(
    p: MarketParams, z: np.ndarray, pi_over_l: np.ndarray, c_over_l: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Diffusion and drift of the frozen-control operator in x = log z."""
    sigma, eta, rho = p.sigma, p.eta, p.rho
    diffusion = 0.5 * (sigma**2 * pi_over_l**2 - 2.0 * eta * rho * sigma * pi_over_l + eta**2)
    drift = (
        p.hedged_excess_return * pi_over_l
        + eta**2
        + p.r
        - p.net_growth
        + p.delta / z
        - c_over_l
        - diffusion
    )
    return diffusion, drift


def hamiltonian(
    coeffs: DCoefficients, p: MarketParams, z: np.ndarray, ux: np.ndarray, uxx: np.ndarray
) -> np.ndarray:
    """-C W_z^2/W_zz + d2 z^2 W_zz + d3 z W_z + delta W_z written in x = log z."""
    curvature = uxx - ux
    return (
        -coeffs.quadratic * ux**2 / curvature
        + coeffs.d2 * curvature
        + coeffs.d3 * ux
        + p.delta * ux / z
    )


def check_shape(ux: np.ndarray, uxx: np.ndarray, time: float | None = None) -> None:
    """Raise unless W_z > 0 and W_zz < 0 at every node."""
    bad = np.flatnonzero(~(ux > 0.0))
    if bad.size:
        node = int(bad[0])
        raise ConcavityError(f"W_z <= 0 at node {node}", node=node, time=time)
    bad = np.flatnonzero(~(uxx - ux < 0.0))
    if bad.size:
        node = int(bad[0])
        raise ConcavityError(f"W_zz >= 0 at node {node}", node=node, time=time)
