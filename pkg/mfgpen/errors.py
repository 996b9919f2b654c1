"""Exception hierarchy for mfgpen.

Configuration and domain problems derive from ``ValueError`` so callers that only
know the builtin exceptions still catch them; numeric failures derive from
``ArithmeticError``.
"""

from typing import List, Optional, Tuple


class MfgPenError(Exception):
    """Base class of every error raised by the package."""


class ConfigError(MfgPenError, ValueError):
    """A configuration document or constructor argument is rejected.

    Attributes:
        field: Dotted path of the offending field, if known.
        line: Line of a JSON syntax error, if any.
        column: Column of a JSON syntax error, if any.
    """

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        prefix = ""
        if field:
            prefix = f"{field}: "
        if line is not None:
            prefix = f"line {line}, column {column}: " + prefix
        super().__init__(prefix + message)


class CoefficientEvaluationError(MfgPenError, ValueError):
    """A coefficient returned a non-finite value at a probe point."""

    def __init__(self, symbol: str, t: float, x: Optional[float] = None):
        self.symbol = symbol
        self.t = t
        self.x = x
        where = f"t={t!r}" if x is None else f"(t, x)=({t!r}, {x!r})"
        super().__init__(f"coefficient {symbol} is not finite at {where}")


class DomainError(MfgPenError, ValueError):
    """An input lies outside the domain of a formula."""


class NumericError(MfgPenError, ArithmeticError):
    """A numerical procedure failed."""


class SingularityError(NumericError):
    """Step refinement hit its depth limit; the grid is too coarse near ``time``."""

    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or
                         f"step-size underflow at t={time!r}; refine the grid near T")


class ConvergenceError(NumericError):
    """An iterative solve did not converge.

    Attributes:
        residual_curve: ``(unknown, residual)`` pairs visited before giving up.
    """

    def __init__(self, message: str,
                 residual_curve: Optional[List[Tuple[float, float]]] = None):
        self.residual_curve = list(residual_curve or [])
        super().__init__(message)


class LimitQualityError(MfgPenError):
    """The limit bundle misses the terminal tolerance."""

    def __init__(self, worst_sample: int, terminal_state: float, tolerance: float):
        self.worst_sample = worst_sample
        self.terminal_state = terminal_state
        self.tolerance = tolerance
        super().__init__(
            f"sample {worst_sample} ends at X_T={terminal_state:.3e} above "
            f"tol_terminal={tolerance:.3e}; add a larger penalty level to the ladder")


class PropertyFailureError(MfgPenError, AssertionError):
    """A property the construction guarantees does not hold."""

    def __init__(self, message: str, probe=None):
        self.probe = probe
        super().__init__(message if probe is None else f"{message} at probe {probe}")


class LadderError(MfgPenError):
    """A penalty level failed; ``partial`` keeps the levels solved so far."""

    def __init__(self, level: float, cause: Exception, partial=None):
        self.level = level
        self.cause = cause
        self.partial = partial
        super().__init__(f"level L={level:g} failed: {cause}")
