"""Exception types raised by the solver stack."""


class LdgError(Exception):
    """Base class for all package errors."""


class SchemeFailure(LdgError):
    """A time step could not be completed (exit code 1 on the CLI)."""


class DomainViolation(SchemeFailure, ValueError):
    """Q left the open domain of the singular potential."""


class NoConvergence(SchemeFailure, RuntimeError):
    """An iterative solve did not reach its tolerance."""


class NonpositiveTemperature(LdgError, ValueError):
    """A thermodynamic function was evaluated at theta <= 0."""


class TemperatureCollapse(SchemeFailure):
    """The temperature field reached a non-positive value during a step."""


class CFLViolation(SchemeFailure):
    """Advective Courant number above the abort threshold."""


class NumericalBlowup(SchemeFailure):
    """Non-finite values appeared in the state."""


class ConfigError(LdgError, ValueError):
    """Invalid or unparsable run configuration (exit code 2 on the CLI)."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(key)
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InsufficientHistory(LdgError, ValueError):
    """Too few diagnostics records for a time-differenced quantity."""


class CFLWarning(UserWarning):
    """Advective Courant number above the warning threshold."""
