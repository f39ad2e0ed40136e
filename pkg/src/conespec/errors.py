"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class ConeSpecError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ConeSpecError, ValueError):
    pass


class DomainError(InvalidParameterError):
    """Evaluation point outside the domain of a profile or manifold."""


class PoleError(InvalidParameterError):
    """A parameter hits a pole of a special function (e.g. Kummer b = 0, -1, ...)."""


class SubcriticalModeError(ConeSpecError, ValueError):
    """Cross-section mode with mu <= n - 2; the indicial root is not real.

    ``deficit`` is ``mu - (n - 2)`` (zero or negative).
    """

    def __init__(self, deficit: float, mode_index: int | None = None):
        self.deficit = float(deficit)
        self.mode_index = mode_index
        where = "" if mode_index is None else f" (mode {mode_index})"
        super().__init__(f"subcritical mode{where}: mu - (n-2) = {self.deficit:.6g}")


class NumericalFailure(ConeSpecError, ArithmeticError):
    pass


class UnsupportedOperation(ConeSpecError, NotImplementedError):
    pass


class NoAdmissibleDeltaError(ConeSpecError, ValueError):
    pass


class NonSemiboundedError(ConeSpecError):
    """Operator is not bounded below (diagnostic manifold)."""


class DegenerateGroundStateError(ConeSpecError):
    pass


class FlowBreakdown(NumericalFailure):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientResolutionError(ConeSpecError):
    pass
