"""Exception hierarchy.

Validators never raise: failed assumption checks land in a
``ValidationReport`` and failed acceptance bars come back as violation
strings. The classes below are for conditions a caller cannot continue
past.
"""

from __future__ import annotations

from typing import Optional


class LabError(Exception):
    """Root of every error raised by ``svgd_limit``."""


class GridMismatchError(LabError, ValueError):
    pass


class SingularEvaluationError(LabError, ValueError):
    pass


class UnderResolvedKernelError(LabError, ValueError):
    pass


class TailMassError(LabError):
    """Box too small: e^{-V} carries more than the tolerated mass outside it."""


class SupportViolationError(LabError):
    pass


class SolverError(LabError, RuntimeError):
    """Abort inside a PDE run; ``cell`` names the offending index if known."""

    def __init__(self, message: str, cell: Optional[tuple] = None, time: Optional[float] = None):
        super().__init__(message)
        self.cell = cell
        self.time = time


class InsufficientSamplesError(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class SnapshotParseError(LabError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
