"""
Plot-ready data for the liquid-capital-share figure.

Consumption and risky-asset shares c/l and pi/l against z = l/h for the
Merton baseline, the exponential law with kappa = 1/lambda and a family of
Weibull laws sharing lambda.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .config import RunConfig
from .export import COMBINED_HEADER, FIGURE_HEADER, write_labelled_table, write_table
from .liquidation import ExponentialLaw, WeibullLaw
from .solvers.exponential_solver import solve_stationary
from .solvers.grids import TimeGrid, ZGrid
from .solvers.weibull_solver import solve_parabolic

logger = logging.getLogger(__name__)

# z below which more than 5% of wealth is illiquid
ILLIQUID_SHARE_Z = 19.0
# z above which the shares must close in on the Merton limits monotonically
ASYMPTOTE_Z = 100.0
MONOTONE_SLACK = 1e-9


@dataclass
class FigureCurve:
    name: str
    z: np.ndarray
    pi_over_l: np.ndarray
    c_over_l: np.ndarray
    c_limit: float


@dataclass
class FigureResult:
    curves: list[FigureCurve]
    files: dict[str, Path] = field(default_factory=dict)
    observations: dict[str, bool] = field(default_factory=dict)


def law_kappa(law: Union[ExponentialLaw, WeibullLaw]) -> float:
    """Exponential rate matching a law: kappa, or 1/lambda for Weibull."""
    return law.kappa if isinstance(law, ExponentialLaw) else 1.0 / law.lambda_


def figure_curves(config: RunConfig) -> list[FigureCurve]:
    """Solve every curve of the figure."""
    s = config.settings
    p = config.market
    kappa = law_kappa(config.law)
    lam = 1.0 / kappa
    zgrid = ZGrid.from_spec(s.grid)
    z = zgrid.nodes
    merton_pi = p.excess_return / p.sigma**2

    curves = [
        FigureCurve("merton", z, np.full(z.size, merton_pi), np.full(z.size, kappa), kappa)
    ]

    curve = solve_stationary(p, kappa, zgrid, s.tol, s.max_iter, s.concavity_floor)
    pi_over_l, c_over_l = curve.policy_ratios()
    curves.append(FigureCurve("exponential", z, pi_over_l, c_over_l, kappa))

    for k in s.weibull_k_values:
        law = WeibullLaw(**{"lambda": lam, "k": k})
        tgrid = TimeGrid.for_law(law, s.survival_cutoff, s.n_time_steps)
        surface = solve_parabolic(p, law, zgrid, tgrid, s.tol, s.inner_max_iter, s.concavity_floor)
        pi_ratio, c_ratio = surface.policy_ratios()
        curves.append(
            FigureCurve(f"weibull_k{k:g}", z, pi_ratio[0], c_ratio[0], 1.0 / float(law.psi1(0.0)))
        )
    return curves


def _approaches(values: np.ndarray, limit: float, top: np.ndarray, slack: float) -> bool:
    """|values - limit| is non-increasing in z over the nodes in top."""
    gap = np.abs(values[top] - limit)
    return bool(np.all(np.diff(gap) <= slack))


def observe(curves: list[FigureCurve], merton_pi: float, tol: float) -> dict[str, bool]:
    """Qualitative features of the figure, one flag per curve and feature.

    The asymptote is read at the last interior node; the approach must be
    monotone in z over every node above ASYMPTOTE_Z.
    """
    observations: dict[str, bool] = {}
    for curve in curves:
        if curve.name == "merton":
            continue
        c_gap = abs(curve.c_over_l[-2] - curve.c_limit) / curve.c_limit
        pi_gap = abs(curve.pi_over_l[-2] - merton_pi) / abs(merton_pi)
        observations[f"{curve.name}:merton_asymptote"] = bool(c_gap <= tol and pi_gap <= tol)
        top = curve.z >= ASYMPTOTE_Z
        observations[f"{curve.name}:monotone_approach"] = _approaches(
            curve.c_over_l, curve.c_limit, top, MONOTONE_SLACK * curve.c_limit
        ) and _approaches(curve.pi_over_l, merton_pi, top, MONOTONE_SLACK * abs(merton_pi))
        below = curve.z < ILLIQUID_SHARE_Z
        observations[f"{curve.name}:risky_share_below_merton"] = bool(
            np.all(curve.pi_over_l[below] < merton_pi)
        )
    for name, holds in observations.items():
        log = logger.info if holds else logger.warning
        log(f"{name}: {'holds' if holds else 'does not hold'}")
    return observations


def run_figure1(config: RunConfig, out_dir: Union[str, Path]) -> FigureResult:
    """Solve the figure curves and write one CSV per curve plus a combined file."""
    out_dir = Path(out_dir)
    curves = figure_curves(config)
    result = FigureResult(curves=curves)
    for curve in curves:
        result.files[curve.name] = write_table(
            out_dir / f"figure1_{curve.name}.csv",
            FIGURE_HEADER,
            [curve.z, curve.pi_over_l, curve.c_over_l],
        )
    result.files["combined"] = write_labelled_table(
        out_dir / "figure1_combined.csv",
        COMBINED_HEADER,
        {curve.name: [curve.z, curve.pi_over_l, curve.c_over_l] for curve in curves},
    )
    merton_pi = config.market.excess_return / config.market.sigma**2
    result.observations = observe(curves, merton_pi, config.settings.limit_tol)
    return result
