"""Binary ROI masks: polygon rasterization and the algebra needed for Dice.

Continuous coordinates put the centre of pixel (i, j) at (i + 0.5, j + 0.5),
so a w x h canvas spans [0, w] x [0, h]. Boundary polylines produced by the
tracker live in the same frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .tracker import Boundary

Point = Tuple[float, float]


@dataclass
class BinaryMask:
    """Per-pixel 0/1 grid, stored as a uint8 array of shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        self.pixels = np.ascontiguousarray(arr.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            (self.pixels == other.pixels).all()
        )


def rasterize(boundary: "Boundary", width: int, height: int) -> BinaryMask:
    """Fill a closed boundary polyline into a mask.

    A pixel is set iff its centre is inside the polygon under the even-odd
    rule; the polygon is closed by joining the last point back to the first.
    """
    if not getattr(boundary, "closed", False):
        raise ValueError("boundary must be closed before rasterization")
    points = list(boundary.points)
    if len(points) < 3:
        raise ValueError(f"need at least 3 boundary points, got {len(points)}")
    if width < 1 or height < 1:
        raise ValueError(f"invalid canvas {width}x{height}")
    return BinaryMask(_fill_even_odd(points, width, height))


def _fill_even_odd(points: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Even-odd polygon fill evaluated at every pixel centre, vectorized."""
    px = np.arange(width, dtype=np.float64) + 0.5
    py = np.arange(height, dtype=np.float64) + 0.5
    px = px[np.newaxis, :]
    py = py[:, np.newaxis]
    inside = np.zeros((height, width), dtype=bool)
    n = len(points)
    for i in range(n):
        xi, yi = float(points[i][0]), float(points[i][1])
        xj, yj = float(points[i - 1][0]), float(points[i - 1][1])
        crosses = (yi > py) != (yj > py)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= crosses & (px < x_at)
    return inside.astype(np.uint8)


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixelwise AND of two equally sized masks."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return BinaryMask(a.pixels & b.pixels)


def area(m: BinaryMask) -> int:
    """Number of set pixels."""
    return int(m.pixels.sum())
