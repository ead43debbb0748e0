# drmtools/errors.py
"""Exception hierarchy shared by every drmtools module.

Each error also derives from the closest builtin so ``except ValueError`` style
handlers in calling code keep working.
"""
from __future__ import annotations

from typing import Optional

__all__ = [
    "DrmError",
    "ShapeMismatch",
    "NonScalarOutput",
    "NonFiniteValue",
    "ZeroMatrix",
    "NonPositiveRatio",
    "DegenerateConstraint",
    "SingularSystem",
    "UnknownShape",
    "UnknownMethod",
    "ParseError",
    "UnknownKey",
    "ConfigRangeError",
]


class DrmError(Exception):
    """Base class for all drmtools errors."""


class ShapeMismatch(DrmError, ValueError):
    pass


class NonScalarOutput(DrmError, ValueError):
    pass


class NonFiniteValue(DrmError, ArithmeticError):
    """A forward value (or a probe of a finite-difference check) was NaN/Inf.

    ``epoch`` is filled in by the trainers when the failure happens mid-run.
    """

    def __init__(self, message: str, *, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch

    def __str__(self) -> str:
        base = super().__str__()
        return base if self.epoch is None else f"{base} (epoch {self.epoch})"


class ZeroMatrix(DrmError, ValueError):
    pass


class NonPositiveRatio(DrmError, ValueError):
    pass


class DegenerateConstraint(DrmError, ArithmeticError):
    pass


class SingularSystem(DrmError, ArithmeticError):
    pass


class UnknownShape(DrmError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class UnknownMethod(DrmError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ParseError(DrmError, ValueError):
    """Malformed config line. ``lineno`` is 1-based."""

    def __init__(self, message: str, *, lineno: Optional[int] = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class UnknownKey(ParseError):
    pass


class ConfigRangeError(DrmError, ValueError):
    """A value is outside its allowed range. ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
