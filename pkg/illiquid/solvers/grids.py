"""
Space and time grids of the reduced equations.
"""
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..liquidation import LiquidationLaw
from ..models import GridSpec


@dataclass(frozen=True)
class ZGrid:
    """Strictly increasing positive nodes of z = l/h.

    Attributes:
        nodes: z_1 < ... < z_N, N >= 3
    """

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise DomainError("a z grid needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)) or nodes[0] <= 0.0:
            raise DomainError("z grid nodes must be finite and positive")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("z grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def log_uniform(cls, z_min: float, z_max: float, n_nodes: int) -> "ZGrid":
        """Nodes equally spaced in log z."""
        if z_min <= 0.0 or z_max <= z_min:
            raise DomainError(f"invalid z range [{z_min}, {z_max}]")
        return cls(np.exp(np.linspace(math.log(z_min), math.log(z_max), n_nodes)))

    @classmethod
    def from_spec(cls, spec: GridSpec) -> "ZGrid":
        return cls.log_uniform(spec.z_min, spec.z_max, spec.n_nodes)

    @property
    def x(self) -> np.ndarray:
        """log z"""
        return np.log(self.nodes)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def z_min(self) -> float:
        return float(self.nodes[0])

    @property
    def z_max(self) -> float:
        return float(self.nodes[-1])

    def refined(self) -> "ZGrid":
        """Insert the log-midpoint of every cell (2N - 1 nodes)."""
        x = self.x
        fine = np.empty(2 * x.size - 1)
        fine[0::2] = x
        fine[1::2] = 0.5 * (x[:-1] + x[1:])
        return ZGrid(np.exp(fine))

    def contains(self, z: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (z >= self.z_min * (1.0 - rtol)) & (z <= self.z_max * (1.0 + rtol))


@dataclass(frozen=True)
class TimeGrid:
    """Time nodes 0 = t_0 < ... < t_M = T_max."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("a time grid needs at least 2 nodes")
        if nodes[0] != 0.0:
            raise DomainError("a time grid starts at t = 0")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("time nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_max: float, n_steps: int) -> "TimeGrid":
        if t_max <= 0.0 or n_steps < 1:
            raise DomainError(f"invalid time grid: T_max={t_max}, steps={n_steps}")
        return cls(np.linspace(0.0, t_max, n_steps + 1))

    @classmethod
    def for_law(
        cls, law: LiquidationLaw, cutoff: float = 1e-10, n_steps: int = 2000
    ) -> "TimeGrid":
        """Uniform grid up to the time where survival drops below cutoff."""
        return cls.uniform(law.horizon(cutoff), n_steps)

    @property
    def t_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return int(self.nodes.size - 1)

    def locate(self, t: float) -> tuple[int, float]:
        """Index i and weight w with t = (1 - w) t_i + w t_{i+1}."""
        if t < 0.0 or t > self.t_max * (1.0 + 1e-12):
            raise DomainError(f"t = {t} outside [0, {self.t_max}]")
        t = min(t, self.t_max)
        i = int(np.searchsorted(self.nodes, t, side="right") - 1)
        i = min(max(i, 0), self.n_steps - 1)
        w = (t - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i])
        return i, float(w)
