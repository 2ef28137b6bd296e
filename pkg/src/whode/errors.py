"""Exception hierarchy shared by all modules."""


class FactorizationError(Exception):
    """Base class for every error raised by the package."""


class SingularMatrix(FactorizationError):
    pass


class DegenerateEigenvalues(FactorizationError):
    pass


class LogOfZero(FactorizationError):
    pass


class ExprSyntaxError(FactorizationError, ValueError):
    """Malformed expression text. ``pos`` is the 0-based offending column."""

    def __init__(self, message, pos=None):
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)
        self.pos = pos


class UndeclaredBranchPoint(FactorizationError):
    pass


class EvalAtBranchPoint(FactorizationError):
    pass


class DivisionByZero(FactorizationError):
    pass


class BadPoleSet(FactorizationError):
    pass


class LTooSmall(FactorizationError):
    pass


class NotDiagonalized(FactorizationError):
    pass


class AmbiguousMatch(FactorizationError):
    pass


class PoleCollision(FactorizationError):
    pass


class NonInvertible(FactorizationError):
    pass


class QuadratureNotConverged(FactorizationError):
    pass


class ConfigError(FactorizationError):
    pass
