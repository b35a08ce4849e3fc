"""Exception hierarchy shared across the package."""


class LongBetError(Exception):
    """Base class for all package errors."""


class PanelError(LongBetError, ValueError):
    """Input panel fails validation."""


class IncompletePanelError(PanelError):
    """A (unit, time) cell is missing."""


class StaggeredAdoptionError(PanelError):
    """A unit's treatment path is not non-decreasing."""

    def __init__(self, unit, message=None):
        self.unit = unit
        super().__init__(message or f"unit {unit!r}: treatment indicator decreases over time "
                         "(staggered adoption requires once-treated-always-treated)")


class PanelParseError(PanelError):
    """A field could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(LongBetError, ValueError):
    """Invalid configuration value or combination."""


class NumericalError(LongBetError, ArithmeticError):
    """A linear-algebra step failed even after jitter escalation."""
