"""Exception hierarchy shared across the package.

Every error raised by gif_lab derives from GifLabError so callers can
catch domain failures without swallowing programming errors.
"""

from __future__ import annotations


class GifLabError(Exception):
    """Base class for all gif_lab errors."""


class InvalidParamError(GifLabError, ValueError):
    """A constructor or operation received a parameter outside its domain."""


class OutOfRangeError(GifLabError, ValueError):
    """A time or index argument fell outside the permitted interval."""


class DegenerateTimeError(GifLabError, ValueError):
    """An operation was requested at a time where it is not defined."""


class NonFiniteError(GifLabError, ValueError):
    """An input array contained NaN or infinity."""


class NonFiniteStateError(GifLabError, ArithmeticError):
    """An integrator state became non-finite.

    Carries the step index at which the blow-up was detected.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class SizeMismatchError(GifLabError, ValueError):
    """Two arrays that must agree in shape did not."""


class TooLargeError(GifLabError, ValueError):
    """An input exceeds a documented size cap."""


class DegenerateInputError(GifLabError, ValueError):
    """Input admits no meaningful answer (e.g. a regression on identical xs)."""


class MissingFieldError(GifLabError, ValueError):
    """A regularity profile or config lacks a field the operation needs."""


class NoRootError(GifLabError, ValueError):
    """A root-finding problem has no solution in the admissible interval."""
