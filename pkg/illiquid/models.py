"""
Pydantic records shared across modules
"""
import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

# ========== Enums ==========


class ExitCode(Enum):
    """Process exit codes of the command-line interface"""
    OK = (0, "Success")
    CONFIG = (1, "Configuration or input error")
    NON_CONVERGENCE = (2, "Solver did not converge")
    VALIDATION = (3, "Validation failure")

    def __init__(self, value: int, description: str):
        self._value_ = value
        self.description = description

    @property
    def code_name(self) -> str:
        """Return the code name as string"""
        return self.name.lower()

    def to_dict(self) -> dict:
        """Return exit code info as dictionary"""
        return {
            "code": self.code_name,
            "value": self.value,
            "description": self.description
        }


# ========== Market Models ==========

class ParameterViolation(BaseModel):
    """A single violated market invariant"""
    field: str = Field(..., description="Offending field name")
    message: str = Field(..., description="Human readable violation")


class MarketParams(BaseModel):
    """Market constants of the bond, the stock and the illiquid asset"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    r: float = Field(..., description="Riskless rate (1/time)")
    alpha: float = Field(..., description="Risky asset drift (1/time)")
    sigma: float = Field(..., description="Risky asset volatility (1/sqrt(time))")
    mu: float = Field(..., description="Drift of the illiquid asset marked value (1/time)")
    delta: float = Field(..., description="Dividend rate of the illiquid asset (1/time)")
    eta: float = Field(..., description="Volatility of the illiquid asset marked value")
    rho: float = Field(..., description="Correlation between stock and illiquid asset")

    @property
    def excess_return(self) -> float:
        """alpha - r"""
        return self.alpha - self.r

    @property
    def hedged_excess_return(self) -> float:
        """alpha - r - eta*rho*sigma, the numerator of d1"""
        return self.alpha - self.r - self.eta * self.rho * self.sigma

    @property
    def net_growth(self) -> float:
        """mu - delta, growth rate of the marked value after dividends"""
        return self.mu - self.delta


class DCoefficients(BaseModel):
    """Derived coefficients of the reduced equations"""
    model_config = ConfigDict(frozen=True)

    d1: float
    d2: float
    d3: float
    quadratic: float = Field(
        ...,
        description="Coefficient C of -W_z^2/W_zz after maximising over pi, (sigma*d1)^2/2"
    )


# ========== Grid Models ==========

class GridSpec(BaseModel):
    """Log-uniform z grid specification"""
    z_min: float = Field(default=1e-2, gt=0.0, description="Smallest z = l/h")
    z_max: float = Field(default=1e4, gt=0.0, description="Largest z = l/h")
    n_nodes: int = Field(default=2000, ge=3, description="Number of grid nodes")

    @model_validator(mode="after")
    def _check_order(self) -> "GridSpec":
        if self.z_max <= self.z_min:
            raise ValueError("z_max must be greater than z_min")
        return self


# ========== Validation Models ==========

class CheckReport(BaseModel):
    """Outcome of one numerical check"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    passed: bool
    measured: float
    threshold: float
    context: str = ""

    @classmethod
    def evaluate(
        cls, name: str, measured: float, threshold: float, context: str = ""
    ) -> "CheckReport":
        """Build a report whose verdict is measured <= threshold."""
        passed = bool(not math.isnan(measured) and measured <= threshold)
        return cls(
            name=name,
            passed=passed,
            measured=float(measured),
            threshold=float(threshold),
            context=context,
        )

    @classmethod
    def informational(cls, name: str, measured: float, context: str = "") -> "CheckReport":
        """Report a measurement that carries no verdict."""
        return cls.evaluate(name, measured, math.inf, context)


# ========== Monte Carlo Models ==========

class PathConfig(BaseModel):
    """Monte Carlo discretisation and sampling settings"""
    dt: float = Field(default=1e-3, gt=0.0, description="Time step")
    horizon: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Simulation horizon; defaults to the survival < 1e-6 time of the law"
    )
    n_paths: int = Field(default=100_000, ge=1, description="Number of paths")
    seed: int = Field(default=42, ge=0, lt=2**64, description="Root seed")
    antithetic: bool = Field(default=True, description="Use antithetic pairs on (W1, W2)")
    chunk_size: int = Field(default=4096, ge=2, description="Paths advanced together")
    max_invalid_fraction: float = Field(
        default=0.01, ge=0.0, le=1.0, description="Largest tolerated share of invalid paths"
    )
    path_budget: float = Field(
        default=5e10, gt=0.0, description="Upper bound on n_paths * horizon / dt"
    )

    @model_validator(mode="after")
    def _check_consistency(self) -> "PathConfig":
        if self.horizon is not None and self.dt > self.horizon:
            raise ValueError("dt must not exceed horizon")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even n_paths")
        if self.chunk_size % 2:
            raise ValueError("chunk_size must be even")
        return self


class UtilityEstimate(BaseModel):
    """Monte Carlo estimate of expected utility"""
    mean: float
    std_error: float = Field(..., ge=0.0)
    n_effective: int = Field(..., ge=0, description="Independent samples behind std_error")
    invalid_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    absorbed_fraction: float = Field(default=0.0, ge=0.0, le=1.0)

    def confidence_interval(self, level: float = 0.95) -> tuple[float, float]:
        """Normal confidence interval for the mean."""
        half = stats.norm.ppf(0.5 + level / 2.0) * self.std_error
        return self.mean - half, self.mean + half


class PerturbationReport(BaseModel):
    """Unperturbed policy against scaled variants"""
    eps: float
    base: UtilityEstimate
    perturbed: dict[str, UtilityEstimate]
    passed: bool
    worst_margin: float = Field(
        ..., description="Largest (perturbed - base) / pooled standard error"
    )
