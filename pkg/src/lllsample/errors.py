"""Exception hierarchy shared by every module."""

from __future__ import annotations


class LLLError(Exception):
    """Base class for all errors raised by the package."""


class InstanceError(LLLError):
    """Invalid instance data. Carries an optional source line number."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class RegionError(LLLError):
    """Bad region, ring range or scope argument."""


class ParameterError(LLLError):
    """A numeric parameter is outside its admissible range."""


class InfeasibleBoundary(LLLError):
    """The conditioning assignment has zero satisfying extensions."""


class BudgetExceeded(LLLError):
    """An enumeration would exceed the configured assignment budget."""

    def __init__(self, needed: int, budget: int):
        self.needed = needed
        self.budget = budget
        super().__init__(f"enumeration of {needed} assignments exceeds budget {budget}")


class InvariantViolation(LLLError):
    """A runtime invariant of the sampler or runtime failed."""
