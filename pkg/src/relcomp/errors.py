"""Exception taxonomy shared across the library.

Every error raised on a library boundary derives from RelcompError so CLI
dispatch can map a failure class to a stable exit code.
"""
from __future__ import annotations

__all__ = [
    "RelcompError",
    "DomainError",
    "ModelError",
    "IntegrityError",
    "NumericError",
    "UndefinedConditionalError",
    "SizeGuardError",
]


class RelcompError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(RelcompError, ValueError):
    """An argument value is outside its documented domain."""

    exit_code = 2


class ModelError(RelcompError, ValueError):
    """A model or table description is structurally invalid."""

    exit_code = 3


class IntegrityError(RelcompError, RuntimeError):
    """A compressed table violates its structural invariants."""

    exit_code = 4


class NumericError(RelcompError, ArithmeticError):
    """A probability vector failed a normalization or range check."""

    exit_code = 5


class UndefinedConditionalError(RelcompError, ZeroDivisionError):
    """The conditioning event has probability zero."""

    exit_code = 6


class SizeGuardError(RelcompError, MemoryError):
    """A dense expansion would exceed the configured size guard."""

    exit_code = 7
