"""Errors raised by the event-perception pipeline.

Every error is also a builtin (``ValueError`` or ``ArithmeticError``) so callers
that only know the builtins keep working.
"""

from typing import Optional


class EhgcnError(Exception):
    """Base class for all pipeline errors."""


class EventFormatError(EhgcnError, ValueError):
    """A row of an event file could not be decoded."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(EhgcnError, ValueError):
    """A numeric parameter or an array shape is out of its domain."""


class ManifoldDomainError(EhgcnError, ValueError):
    """A point lies on or outside the Poincare ball."""


class CurvatureMismatchError(EhgcnError, ValueError):
    """Two manifold points live on balls of different curvature."""


class InvalidFeatureError(EhgcnError, ValueError):
    """A motion feature without a valid velocity was used for scoring."""


class EmptyWindowError(EhgcnError, ValueError):
    """An operation needs at least one event but got none."""


class DatasetError(EhgcnError, ValueError):
    """Labels, classes or the dataset manifest are inconsistent."""


class DivergenceError(EhgcnError, ArithmeticError):
    """A loss, activation or gradient became non-finite."""
