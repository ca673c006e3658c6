"""
Command-line entry point.

    illiquid solve-exp --config run.conf --out out/
    illiquid solve-weibull --config configs/fig1.conf --set n_nodes=400
    illiquid simulate --config run.conf --policy out/curve.csv --paths 20000
    illiquid validate --config run.conf > report.jsonl
    illiquid figure1 --config configs/fig1.conf --out figures/

Exit codes follow ExitCode: 0 success, 1 configuration or parameter error,
2 solver non-convergence, 3 failed validation or simulation.
"""
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .errors import (
    ConfigError,
    DomainError,
    IlliquidError,
    NonConvergenceError,
    SimulationError,
    ValidationFailure,
)
from .export import (
    read_curve_policy,
    read_curve_table,
    write_curve,
    write_merton,
    write_policy,
    write_simulation,
    write_surface,
)
from .factory import create_solver
from .figure import law_kappa, run_figure1
from .liquidation import ExponentialLaw
from .logging_config import setup_logging
from .market_model import reduction_constant
from .models import ExitCode
from .policy import CurvePolicy, PolicyField, SurfacePolicy
from .simulation import estimate_utility_survival_weighted
from .solvers.exponential_solver import ValueCurve
from .solvers.exponential_solver import reconstruct_value as curve_value
from .solvers.grids import ZGrid
from .solvers.weibull_solver import ValueSurface
from .solvers.weibull_solver import reconstruct_value as surface_value
from .validation import run_suite

logger = logging.getLogger("illiquid.main")

DEFAULT_OUT = Path("out")


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([f"--set: expected key=value, got '{item}'"])
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.relax_drift_check:
        overrides["relax_drift_check"] = "true"
    for flag, key in (("paths", "n_paths"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


def load_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(args.config, _overrides(args))
    logger.info(
        f"Loaded configuration ({config.source or 'defaults'}): "
        f"law={config.law.law}, {config.settings.n_nodes} nodes "
        f"on [{config.settings.z_min:g}, {config.settings.z_max:g}]"
    )
    return config


def cmd_solve_exp(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    if not isinstance(config.law, ExponentialLaw):
        raise ConfigError(["solve-exp needs law = exponential (set kappa)"])
    solver = create_solver(config.market, config.law, config.settings)
    curve = solver.solve()
    write_curve(args.out / "curve.csv", curve)
    logger.info(f"Solve record: {solver.record.to_dict()}")
    return ExitCode.OK


def cmd_solve_weibull(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    if isinstance(config.law, ExponentialLaw):
        raise ConfigError(["solve-weibull needs law = weibull (set lambda and k)"])
    solver = create_solver(config.market, config.law, config.settings)
    surface = solver.solve()
    write_surface(args.out / "surface.csv", surface, args.time_stride)
    write_policy(args.out / "policy.csv", surface, config.law)
    logger.info(f"Solve record: {solver.record.to_dict()}")
    return ExitCode.OK


def cmd_merton(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    z = ZGrid.from_spec(config.grid).nodes
    write_merton(args.out / "merton.csv", z, config.market, law_kappa(config.law))
    return ExitCode.OK


def _loaded_curve_value(path: Path, config: RunConfig, l0: float, h0: float) -> float:
    """Value at t = 0 from the v column of a curve CSV, NaN when unavailable."""
    if not isinstance(config.law, ExponentialLaw):
        logger.warning("A curve file carries no value for a Weibull law; solver_value is NaN")
        return math.nan
    try:
        data = read_curve_table(path, ("z", "v"))
    except ConfigError:
        logger.warning(f"{path} has no v column; solver_value is NaN")
        return math.nan
    x = np.log(l0 / h0)
    log_z = np.log(data["z"])
    if not log_z[0] <= x <= log_z[-1]:
        raise DomainError(f"z = {l0 / h0:g} lies outside the curve in {path}")
    kappa = config.law.kappa
    v = float(np.interp(x, log_z, data["v"]))
    return v + math.log(h0) / kappa + reduction_constant(kappa, config.market)


def _solved_policy(
    config: RunConfig, l0: float, h0: float
) -> tuple[PolicyField, float]:
    result = create_solver(config.market, config.law, config.settings).solve()
    if isinstance(result, ValueCurve):
        value = curve_value(0.0, l0, h0, result, config.market, result.kappa)
        return CurvePolicy(result), value
    assert isinstance(result, ValueSurface)
    value = surface_value(result, 0.0, l0, h0, config.law, config.market)
    return SurfacePolicy(result), value


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    if args.l0 <= 0.0 or args.h0 <= 0.0:
        raise DomainError(f"l0 and h0 must be > 0, got l0={args.l0}, h0={args.h0}")
    policy: PolicyField
    if args.policy is not None:
        policy = read_curve_policy(args.policy)
        solver_value = _loaded_curve_value(args.policy, config, args.l0, args.h0)
    else:
        policy, solver_value = _solved_policy(config, args.l0, args.h0)
    cfg = config.settings.path_config()
    estimate = estimate_utility_survival_weighted(
        policy, config.market, config.law, args.l0, args.h0, cfg
    )
    write_simulation(
        args.out / "simulate.csv",
        estimate.mean,
        estimate.std_error,
        estimate.absorbed_fraction,
        solver_value,
    )
    return ExitCode.OK


def cmd_validate(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    reports = run_suite(config)
    for report in reports:
        sys.stdout.write(report.model_dump_json() + "\n")
    sys.stdout.flush()
    failed = [report.name for report in reports if not report.passed]
    if failed:
        raise ValidationFailure(failed)
    return ExitCode.OK


def cmd_figure1(args: argparse.Namespace, config: RunConfig) -> ExitCode:
    result = run_figure1(config, args.out)
    held = sum(result.observations.values())
    logger.info(f"Figure data written, {held}/{len(result.observations)} observations hold")
    return ExitCode.OK


COMMANDS: dict[str, tuple[Callable[[argparse.Namespace, RunConfig], ExitCode], str]] = {
    "solve-exp": (cmd_solve_exp, "Stationary curve v(z) for an exponential law"),
    "solve-weibull": (cmd_solve_weibull, "Value surface W(t, z) for a Weibull law"),
    "merton": (cmd_merton, "Liquid-only benchmark ratios and value"),
    "simulate": (cmd_simulate, "Monte Carlo utility of a feedback policy"),
    "validate": (cmd_validate, "Run the numerical checks, JSON lines on stdout"),
    "figure1": (cmd_figure1, "Policy ratios for the Merton, exponential and Weibull laws"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=DEFAULT_OUT, help="Output directory")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override one configuration key (repeatable)",
    )
    common.add_argument("--log-level", help="debug, info, warning or error")
    common.add_argument(
        "--log-format", choices=("color", "json"), help="Log record format on stderr"
    )
    common.add_argument(
        "--relax-drift-check",
        action="store_true",
        help="Warn instead of failing when r - (mu - delta) <= 0",
    )

    parser = argparse.ArgumentParser(
        prog="illiquid",
        description="Consumption and investment with an illiquid asset sold at a random time",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        if name == "solve-weibull":
            sub.add_argument(
                "--time-stride", type=int, default=1, help="Write every n-th time slice"
            )
        if name == "simulate":
            sub.add_argument("--policy", type=Path, help="Curve CSV written by solve-exp")
            sub.add_argument("--l0", type=float, default=1.0, help="Initial liquid wealth")
            sub.add_argument("--h0", type=float, default=1.0, help="Initial illiquid wealth")
            sub.add_argument("--paths", type=int, help="Number of simulated paths")
            sub.add_argument("--seed", type=int, help="Root random seed")
    return parser


def exit_code_for(error: IlliquidError) -> ExitCode:
    if isinstance(error, NonConvergenceError):
        return ExitCode.NON_CONVERGENCE
    if isinstance(error, (ValidationFailure, SimulationError)):
        return ExitCode.VALIDATION
    return ExitCode.CONFIG


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler, _ = COMMANDS[args.command]
    try:
        setup_logging(args.log_level or "info", args.log_format or "color")
        config = load_config(args)
        if args.log_level is None or args.log_format is None:
            setup_logging(
                args.log_level or config.settings.log_level,
                args.log_format or config.settings.log_format,
            )
        code = handler(args, config)
    except IlliquidError as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed ({code.code_name}): {e}")
    except ValueError as e:
        code = ExitCode.CONFIG
        logger.error(f"{args.command} failed ({code.code_name}): {e}")
    return code.value


def run() -> None:
    """Console-script entry point"""
    sys.exit(main())


if __name__ == "__main__":
    run()
