"""Exception hierarchy. Every error carries a machine-readable ``kind``
string that the CLI maps onto exit codes and ``error.kind`` JSON output.
"""

from __future__ import annotations


class DelayLQError(Exception):
    """Base class for all package errors."""

    kind = "error"


class ParameterError(DelayLQError):
    """Invalid model/grid/config parameters."""

    kind = "parameter"


class DomainError(DelayLQError):
    """Kernel evaluation requested outside [0,T] x [-d,0]^2."""

    kind = "domain"


class StateError(DelayLQError):
    """Operation requires a solved grid region that is not available."""

    kind = "state"


class CSVFormatError(DelayLQError):
    """Malformed kernel CSV file."""

    kind = "parse"

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConvergenceError(DelayLQError):
    """Picard iteration failed to reach tolerance, even after bisection."""

    kind = "convergence"

    def __init__(self, message: str, slice_index: int, residual: float):
        super().__init__(message)
        self.slice_index = slice_index
        self.residual = residual


class PositivityError(DelayLQError):
    """A solved kernel violates a positivity requirement or proven bound."""

    kind = "positivity"

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class DegeneracyError(DelayLQError):
    """Feedback evaluation hit a nonpositive denominator kernel."""

    kind = "degeneracy"


class DegenerateFrontierError(DelayLQError):
    """Outer mean-variance problem is not strictly concave (P11(0) ~ 1)."""

    kind = "degenerate-frontier"


class SimulationError(DelayLQError):
    """Path simulation produced a non-finite state."""

    kind = "simulation"

    def __init__(self, message: str, path_index: int, step: int):
        super().__init__(message)
        self.path_index = path_index
        self.step = step
