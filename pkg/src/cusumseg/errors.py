"""Exception types shared across the package."""

from __future__ import annotations


class CusumSegError(Exception):
    """Base class for all package-specific failures."""


class BoundsError(CusumSegError):
    """A position, probe ray, or step left the valid image area."""


class LowContrastError(CusumSegError):
    """Probe means on the two sides of the seed are too close to separate."""


class FormatError(CusumSegError):
    """Malformed or truncated image file."""


class NoClosureError(CusumSegError):
    """The boundary walk exhausted its step budget without closing.

    Carries the partial result so callers can inspect how far the walk got.
    """

    def __init__(self, message: str, steps: int = 0, points=None):
        super().__init__(message)
        self.steps = steps
        self.points = list(points) if points is not None else []
