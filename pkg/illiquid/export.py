"""
Plain CSV output with fixed headers, and reading a curve back as a policy.
"""
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError
from .liquidation import WeibullLaw
from .market_model import merton_curve, reduction_constant
from .models import MarketParams
from .policy import RatioPolicy
from .solvers.exponential_solver import ValueCurve
from .solvers.weibull_solver import ValueSurface

logger = logging.getLogger(__name__)

CURVE_HEADER = ("z", "v", "vz", "vzz", "pi_over_l", "c_over_l")
SURFACE_HEADER = ("t", "z", "W", "Wz", "Wzz")
POLICY_HEADER = ("z", "pi_over_l", "c_over_l", "k", "lambda")
SIMULATE_HEADER = ("mean", "std_error", "absorbed_fraction", "solver_value")
MERTON_HEADER = ("z", "pi_over_l", "c_over_l", "value")
FIGURE_HEADER = ("z", "pi_over_l", "c_over_l")
COMBINED_HEADER = ("curve", "z", "pi_over_l", "c_over_l")

NUMBER_FORMAT = "%.12g"


def write_table(
    path: Union[str, Path], header: Sequence[str], columns: Sequence[np.ndarray]
) -> Path:
    """Write equally long numeric columns under a comma-separated header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, table, fmt=NUMBER_FORMAT, delimiter=",", header=",".join(header), comments="")
    logger.info(f"Wrote {table.shape[0]} rows to {path}")
    return path


def write_labelled_table(
    path: Union[str, Path],
    header: Sequence[str],
    blocks: dict[str, Sequence[np.ndarray]],
) -> Path:
    """Stack several numeric tables with a leading label column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, columns in blocks.items():
        numeric = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        labels = np.full((numeric.shape[0], 1), label, dtype=object)
        rows.append(np.hstack([labels, numeric.astype(object)]))
    table = np.vstack(rows)
    fmt = ["%s"] + [NUMBER_FORMAT] * (table.shape[1] - 1)
    np.savetxt(path, table, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    logger.info(f"Wrote {table.shape[0]} rows to {path}")
    return path


def write_curve(path: Union[str, Path], curve: ValueCurve) -> Path:
    pi_over_l, c_over_l = curve.policy_ratios()
    return write_table(
        path, CURVE_HEADER, [curve.grid.nodes, curve.v, curve.vz, curve.vzz, pi_over_l, c_over_l]
    )


def write_surface(path: Union[str, Path], surface: ValueSurface, time_stride: int = 1) -> Path:
    """Long-format surface, every time_stride-th time node plus the last one."""
    if time_stride < 1:
        raise ValueError("time_stride must be >= 1")
    t = surface.tgrid.nodes
    rows = np.arange(0, t.size, time_stride)
    if rows[-1] != t.size - 1:
        rows = np.append(rows, t.size - 1)
    z = surface.zgrid.nodes
    tt, zz = np.meshgrid(t[rows], z, indexing="ij")
    return write_table(
        path,
        SURFACE_HEADER,
        [
            tt.ravel(),
            zz.ravel(),
            surface.W[rows].ravel(),
            surface.Wz[rows].ravel(),
            surface.Wzz[rows].ravel(),
        ],
    )


def write_policy(path: Union[str, Path], surface: ValueSurface, law: WeibullLaw) -> Path:
    """Policy ratios at t = 0 tagged with the law parameters."""
    pi_over_l, c_over_l = surface.policy_ratios()
    z = surface.zgrid.nodes
    return write_table(
        path,
        POLICY_HEADER,
        [z, pi_over_l[0], c_over_l[0], np.full(z.size, law.k), np.full(z.size, law.lambda_)],
    )


def write_merton(path: Union[str, Path], z: np.ndarray, p: MarketParams, kappa: float) -> Path:
    """Merton ratios and value V(0, z, 1) = M + log(kappa z)/kappa."""
    value = merton_curve(z, kappa, p) + reduction_constant(kappa, p)
    return write_table(
        path,
        MERTON_HEADER,
        [z, np.full(z.size, p.excess_return / p.sigma**2), np.full(z.size, kappa), value],
    )


def write_simulation(
    path: Union[str, Path],
    mean: float,
    std_error: float,
    absorbed_fraction: float,
    solver_value: float,
) -> Path:
    return write_table(
        path,
        SIMULATE_HEADER,
        [np.array([mean]), np.array([std_error]), np.array([absorbed_fraction]), np.array([solver_value])],
    )


def read_curve_table(path: Union[str, Path], columns: Sequence[str] = FIGURE_HEADER) -> np.ndarray:
    """Structured array of a CSV written by write_curve (or any table holding columns).

    Raises:
        ConfigError: Missing file or columns
    """
    path = Path(path)
    try:
        data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    except (OSError, ValueError) as e:
        raise ConfigError([f"{path}: {e}"]) from e
    names = data.dtype.names or ()
    missing = [name for name in columns if name not in names]
    if missing:
        raise ConfigError([f"{path}: missing column(s) {', '.join(missing)}"])
    return data


def read_curve_policy(path: Union[str, Path]) -> RatioPolicy:
    """Load the pi/l and c/l columns of a curve CSV as a stationary policy."""
    data = read_curve_table(path)
    return RatioPolicy(data["z"], data["pi_over_l"], data["c_over_l"])
