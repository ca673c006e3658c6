"""Base solver with run bookkeeping.

Every solve is wrapped in a SolveRecord that tracks status, timing and a short
summary of the result, so the CLI and the validation suite report solves the
same way regardless of the law.
"""

import logging
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional

from ..errors import IlliquidError

logger = logging.getLogger(__name__)


def _now() -> datetime:
    return datetime.now(timezone.utc)


class SolveStatus(str, Enum):
    """Status of a solve."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class SolveRecord:
    """Bookkeeping of one solve.

    Attributes:
        solve_id: Unique identifier
        solver: Solver name ("exponential" or "weibull")
        status: Current status
        summary: Result summary when the solve completes
        error: Error message if the solve fails
        created_at: When the solver was built
        started_at: When the solve started
        completed_at: When the solve finished (success or failure)
    """

    solver: str
    solve_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    status: SolveStatus = SolveStatus.PENDING
    summary: dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    created_at: datetime = field(default_factory=_now)
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None

    @property
    def elapsed_s(self) -> Optional[float]:
        if self.started_at is None or self.completed_at is None:
            return None
        return (self.completed_at - self.started_at).total_seconds()

    def to_dict(self) -> dict[str, Any]:
        """Convert the record to a JSON-friendly dictionary."""
        return {
            "solve_id": self.solve_id,
            "solver": self.solver,
            "status": self.status.value,
            "summary": self.summary,
            "error": self.error,
            "created_at": self.created_at.isoformat(),
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "completed_at": (
                self.completed_at.isoformat() if self.completed_at else None
            ),
            "elapsed_s": self.elapsed_s,
        }


class BaseSolver(ABC):
    """Abstract base class of the value-function solvers.

    Subclasses implement execute_solve() and summarize(); solve() runs the
    lifecycle and keeps the record current.
    """

    name: str = "base"

    def __init__(self) -> None:
        self.record = SolveRecord(solver=self.name)
        self.result: Any = None

    @abstractmethod
    def execute_solve(self) -> Any:
        """Run the numerical solve (implemented by subclasses).

        Raises:
            NonConvergenceError: Iteration did not converge
            DomainError: Invalid inputs
        """
        pass

    @abstractmethod
    def summarize(self, result: Any) -> dict[str, Any]:
        """Short JSON-friendly description of a result."""
        pass

    def solve(self) -> Any:
        """Execute the solve with full lifecycle management.

        Returns:
            The solver result

        Raises:
            IlliquidError: Re-raised after the record is marked failed
        """
        self.record.status = SolveStatus.RUNNING
        self.record.started_at = _now()
        logger.info(f"Solve {self.record.solve_id} ({self.name}) started")
        try:
            result = self.execute_solve()
        except IlliquidError as e:
            self.record.status = SolveStatus.FAILED
            self.record.error = str(e)
            self.record.completed_at = _now()
            logger.error(f"Solve {self.record.solve_id} ({self.name}) failed: {e}")
            raise

        self.record.status = SolveStatus.COMPLETED
        self.record.completed_at = _now()
        self.record.summary = self.summarize(result)
        self.result = result
        logger.info(
            f"Solve {self.record.solve_id} ({self.name}) completed "
            f"in {self.record.elapsed_s:.2f} s"
        )
        return result
