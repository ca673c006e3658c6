"""
Exception hierarchy shared by the solvers, the simulator and the CLI.
"""
from typing import Optional


class IlliquidError(Exception):
    """Base class for every error raised by the package."""

    pass


class ConfigError(IlliquidError):
    """Raised when a run configuration cannot be turned into a RunConfig.

    Collects every problem found instead of stopping at the first one.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        summary = "; ".join(self.errors) if self.errors else "invalid configuration"
        super().__init__(summary)


class InvalidParametersError(IlliquidError):
    """Raised by market_model.validate when invariants are violated."""

    def __init__(self, violations: list["ParameterViolation"]):  # noqa: F821
        self.violations = list(violations)
        super().__init__(
            "; ".join(f"{v.field}: {v.message}" for v in self.violations)
        )


class DomainError(IlliquidError, ValueError):
    """Argument outside the domain of a function (negative time, l <= 0, ...)."""

    pass


class NonConvergenceError(IlliquidError):
    """A solver iteration did not reach its tolerance."""

    def __init__(
        self,
        message: str,
        iterations: Optional[int] = None,
        update: Optional[float] = None,
        time: Optional[float] = None,
    ):
        self.iterations = iterations
        self.update = update
        self.time = time
        super().__init__(message)


class ConcavityError(NonConvergenceError):
    """The iterate lost concavity or monotonicity in z."""

    def __init__(self, message: str, node: int, time: Optional[float] = None):
        self.node = node
        super().__init__(message, time=time)


class SimulationError(IlliquidError):
    """Monte Carlo run rejected (too many invalid paths, budget exceeded)."""

    pass


class ValidationFailure(IlliquidError):
    """One or more validation checks failed."""

    def __init__(self, failed: list[str]):
        self.failed = list(failed)
        super().__init__(f"{len(self.failed)} check(s) failed: {', '.join(self.failed)}")
