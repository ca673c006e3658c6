"""
Configuration management using pydantic-settings

Process-wide defaults live in SolverSettings (ILLIQ_* environment variables or
.env), and RunEnvironment reads the market and law keys the same way. A run is
described by a flat key = value file whose keys are the market constants, the
liquidation law and any SolverSettings field; parse_config merges the layers
into a RunConfig.
"""
import logging
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .liquidation import ExponentialLaw, LiquidationLaw, WeibullLaw
from .market_model import DRIFT_FIELD, check_invariants
from .models import GridSpec, MarketParams, PathConfig

logger = logging.getLogger(__name__)

MARKET_KEYS = ("r", "alpha", "sigma", "mu", "delta", "eta", "rho")
LAW_KEYS = ("law", "kappa", "lambda", "k")
LIST_KEYS = ("weibull_k_values",)
TRUE_WORDS = ("true", "yes", "on")
FALSE_WORDS = ("false", "no", "off")


class RunEnvironment(BaseSettings):
    """Market and law keys read from ILLIQ_* variables (ILLIQ_R, ILLIQ_KAPPA, ...)"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="ILLIQ_",
        case_sensitive=False,
        extra="ignore",
    )

    r: Optional[str] = None
    alpha: Optional[str] = None
    sigma: Optional[str] = None
    mu: Optional[str] = None
    delta: Optional[str] = None
    eta: Optional[str] = None
    rho: Optional[str] = None
    law: Optional[str] = None
    kappa: Optional[str] = None
    lambda_: Optional[str] = Field(default=None, validation_alias="illiq_lambda")
    k: Optional[str] = None

    def pairs(self) -> dict[str, str]:
        """Set keys under their run-file names."""
        found = self.model_dump(exclude_none=True)
        if "lambda_" in found:
            found["lambda"] = found.pop("lambda_")
        return {key: str(value).strip() for key, value in found.items()}


class SolverSettings(BaseSettings):
    """Solver, simulation and validation defaults"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="ILLIQ_",
        case_sensitive=False,
        extra="ignore",
    )

    # Space grid
    z_min: float = Field(default=1e-2, gt=0.0, description="Smallest z = l/h")
    z_max: float = Field(default=1e4, gt=0.0, description="Largest z = l/h")
    n_nodes: int = Field(default=2000, ge=3, description="Number of z nodes")

    # Policy iteration
    tol: float = Field(default=1e-8, gt=0.0, description="Sup-norm update tolerance")
    max_iter: int = Field(default=200, ge=1, description="Policy iterations of the stationary solve")
    residual_tol: float = Field(
        default=1e-6, gt=0.0, description="Acceptance level of the stationary residual"
    )
    inner_max_iter: int = Field(
        default=50, ge=2, description="Policy iterations per time step"
    )
    concavity_floor: float = Field(
        default=1e-14, gt=0.0, description="Floor on -z W_zz / W_z when building controls"
    )

    # Time stepping
    n_time_steps: int = Field(default=2000, ge=1, description="Backward Euler steps")
    survival_cutoff: float = Field(
        default=1e-10, gt=0.0, lt=1.0, description="Survival level that sets T_max"
    )

    # Monte Carlo
    dt: float = Field(default=1e-3, gt=0.0, description="Simulation time step")
    horizon: Optional[float] = Field(
        default=None, gt=0.0, description="Simulation horizon; law-dependent when unset"
    )
    n_paths: int = Field(default=100_000, ge=1, description="Number of simulated paths")
    seed: int = Field(default=42, ge=0, description="Root random seed")
    antithetic: bool = Field(default=True, description="Antithetic pairs on (W1, W2)")
    chunk_size: int = Field(default=4096, ge=2, description="Paths advanced together")
    max_invalid_fraction: float = Field(
        default=0.01, ge=0.0, le=1.0, description="Largest tolerated share of invalid paths"
    )
    path_budget: float = Field(
        default=5e10, gt=0.0, description="Upper bound on paths x time steps"
    )

    # Figure
    weibull_k_values: list[float] = Field(
        default=[1.5, 2.0, 3.0], description="Weibull shapes plotted next to the exponential curve"
    )

    # Validation thresholds
    limit_tol: float = Field(default=0.01, gt=0.0, description="Relative gap to the Merton limits")
    psi_tol: float = Field(default=1e-6, gt=0.0, description="ODE residual of Psi_2 and Theta")
    gamma_tol: float = Field(default=1e-8, gt=0.0, description="Relative error of Gamma(a, x)")
    homotheticity_tol: float = Field(default=1e-6, gt=0.0)
    degeneration_tol: float = Field(
        default=1e-3, gt=0.0, description="Relative gap of the k = 1 surface to the stationary curve"
    )
    proposition_sigmas: float = Field(
        default=2.0, gt=0.0, description="Pooled standard errors allowed between the two estimators"
    )
    perturbation_eps: float = Field(default=0.2, ge=0.0, lt=0.5)
    c1_tol: float = Field(
        default=0.1, gt=0.0, description="Relative change of C1 allowed under grid refinement"
    )
    refinement_ratio: float = Field(
        default=3.0, gt=1.0, description="Smallest ratio of successive differences under refinement"
    )
    refinement_nodes: int = Field(default=101, ge=3, description="Coarsest z grid of the refinement study")
    refinement_steps: int = Field(default=100, ge=1, description="Coarsest time grid of the refinement study")
    cutoff_tol: float = Field(
        default=1e-6, gt=0.0, description="Change of W(0, .) allowed when the survival cutoff is halved"
    )

    # Run behaviour
    relax_drift_check: bool = Field(
        default=False, description="Downgrade r - (mu - delta) > 0 to a warning"
    )

    # Logging
    log_level: str = Field(default="info", description="Logging level")
    log_format: Literal["color", "json"] = Field(default="color", description="Log record format")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(z_min=self.z_min, z_max=self.z_max, n_nodes=self.n_nodes)

    def path_config(self, horizon: Optional[float] = None) -> PathConfig:
        return PathConfig(
            dt=self.dt,
            horizon=horizon if horizon is not None else self.horizon,
            n_paths=self.n_paths,
            seed=self.seed,
            antithetic=self.antithetic,
            chunk_size=self.chunk_size,
            max_invalid_fraction=self.max_invalid_fraction,
            path_budget=self.path_budget,
        )


# Global settings instance
settings = SolverSettings()


class RunConfig(BaseModel):
    """Everything a CLI command needs"""
    model_config = ConfigDict(frozen=True)

    market: MarketParams
    law: LiquidationLaw
    settings: SolverSettings
    source: Optional[Path] = None

    @property
    def grid(self) -> GridSpec:
        return self.settings.grid

    @property
    def relax_drift_check(self) -> bool:
        return self.settings.relax_drift_check


def read_pairs(text: str) -> tuple[dict[str, str], list[str]]:
    """Split key = value lines; returns the pairs and the syntax errors."""
    pairs: dict[str, str] = {}
    errors: list[str] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {number}: expected 'key = value', got '{raw.strip()}'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if not key or not value:
            errors.append(f"line {number}: empty key or value")
            continue
        if key in pairs:
            errors.append(f"line {number}: duplicate key '{key}'")
            continue
        pairs[key] = value
    return pairs, errors


def _coerce(key: str, value: str) -> Any:
    if key in LIST_KEYS:
        return [item.strip() for item in value.split(",") if item.strip()]
    lowered = value.lower()
    if lowered in TRUE_WORDS:
        return True
    if lowered in FALSE_WORDS:
        return False
    return value


def _format_validation(prefix: str, error: ValidationError) -> list[str]:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        label = f"{prefix}.{location}" if location else prefix
        messages.append(f"{label}: {item['msg']}")
    return messages


def _build_law(values: dict[str, str], errors: list[str]) -> Optional[Union[ExponentialLaw, WeibullLaw]]:
    declared = values.get("law", "").lower() or None
    has_exp = "kappa" in values
    has_weibull = "lambda" in values or "k" in values
    if declared is None:
        if has_exp and has_weibull:
            errors.append("law: both kappa and lambda/k given; set law = exponential or weibull")
            return None
        if not (has_exp or has_weibull):
            errors.append("law: missing (give kappa, or lambda and k)")
            return None
        declared = "exponential" if has_exp else "weibull"
    try:
        if declared == "exponential":
            if has_weibull:
                errors.append("law: lambda/k are not parameters of the exponential law")
                return None
            if not has_exp:
                errors.append("kappa: missing for the exponential law")
                return None
            return ExponentialLaw(kappa=values["kappa"])
        if declared == "weibull":
            if has_exp:
                errors.append("law: kappa is not a parameter of the Weibull law")
                return None
            missing = [key for key in ("lambda", "k") if key not in values]
            if missing:
                errors.extend(f"{key}: missing for the Weibull law" for key in missing)
                return None
            return WeibullLaw(**{"lambda": values["lambda"], "k": values["k"]})
    except ValidationError as e:
        errors.extend(_format_validation("law", e))
        return None
    errors.append(f"law: unknown law '{declared}' (expected exponential or weibull)")
    return None


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[dict[str, str]] = None,
) -> RunConfig:
    """Build a RunConfig from a config file and command-line overrides.

    Precedence: defaults < ILLIQ_* environment < file < overrides.

    Raises:
        ConfigError: Every problem found, collected
    """
    errors: list[str] = []
    values: dict[str, str] = {}
    source = Path(path) if path is not None else None
    if source is not None:
        try:
            text = source.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError([f"{source}: {e.strerror or e}"]) from e
        values, syntax = read_pairs(text)
        errors.extend(f"{source.name} {message}" for message in syntax)
    for key, value in (overrides or {}).items():
        values[key.strip().lower()] = value.strip()

    environment = RunEnvironment().pairs()
    if any(key in values for key in LAW_KEYS):
        environment = {key: value for key, value in environment.items() if key not in LAW_KEYS}
    for key, value in environment.items():
        values.setdefault(key, value)

    setting_names = set(SolverSettings.model_fields)
    unknown = sorted(set(values) - set(MARKET_KEYS) - set(LAW_KEYS) - setting_names)
    errors.extend(f"{key}: unknown key" for key in unknown)

    market: Optional[MarketParams] = None
    missing = [key for key in MARKET_KEYS if key not in values]
    errors.extend(f"{key}: missing market parameter" for key in missing)
    if not missing:
        try:
            market = MarketParams(**{key: values[key] for key in MARKET_KEYS})
        except ValidationError as e:
            errors.extend(_format_validation("market", e))

    law = _build_law(values, errors)

    run_settings: Optional[SolverSettings] = None
    try:
        run_settings = SolverSettings(
            **{key: _coerce(key, values[key]) for key in values if key in setting_names}
        )
    except ValidationError as e:
        errors.extend(_format_validation("settings", e))
    if run_settings is not None:
        try:
            GridSpec(z_min=run_settings.z_min, z_max=run_settings.z_max, n_nodes=run_settings.n_nodes)
        except ValidationError as e:
            errors.extend(_format_validation("settings.grid", e))

    if market is not None:
        relaxed = run_settings.relax_drift_check if run_settings is not None else False
        for violation in check_invariants(market):
            if violation.field == DRIFT_FIELD and relaxed:
                logger.warning(f"Drift condition relaxed: {violation.message}")
                continue
            errors.append(f"{violation.field}: {violation.message}")

    if errors:
        raise ConfigError(errors)
    assert market is not None and law is not None and run_settings is not None
    logger.debug(f"Parsed configuration from {source}: law={law.law}")
    return RunConfig(market=market, law=law, settings=run_settings, source=source)
