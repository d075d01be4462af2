"""Overlap scoring and the global-threshold baseline segmenter.

Dice coefficient of two binary masks A, B:

    dice = 2 |A n B| / (|A| + |B|)

Two empty masks agree perfectly and score 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .imgio import GrayImage
from .mask import BinaryMask


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap of two same-shape masks, in [0, 1]."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"mask shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )
    total = int(a.pixels.sum()) + int(b.pixels.sum())
    if total == 0:
        return 1.0
    overlap = int((a.pixels & b.pixels).sum())
    return 2.0 * overlap / total


def threshold_segment(
    image: GrayImage, threshold: float, keep_largest: bool = False
) -> BinaryMask:
    """Mark pixels with intensity >= threshold.

    With ``keep_largest`` only the biggest 4-connected foreground component
    survives; ties keep the lowest-labelled component. An empty foreground
    stays empty.
    """
    fg = image.pixels >= threshold
    if keep_largest and fg.any():
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        labels, count = ndimage.label(fg, structure=structure)
        if count > 1:
            sizes = ndimage.sum_labels(fg, labels, index=np.arange(1, count + 1))
            fg = labels == (int(np.argmax(sizes)) + 1)
    return BinaryMask(fg.astype(np.uint8))


def aggregate(scores: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (ddof=1; 0.0 for a single score)."""
    values = [float(s) for s in scores]
    if not values:
        raise ValueError("need at least one score")
    for s in values:
        if not 0.0 <= s <= 1.0 or not math.isfinite(s):
            raise ValueError(f"score {s} outside [0, 1]")
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


@dataclass
class DiceReport:
    """Per-case scores for one method plus their summary statistics."""

    method: str
    scores: List[float]
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        self.mean, self.std = aggregate(self.scores)

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "n": len(self.scores),
            "scores": [round(s, 6) for s in self.scores],
            "mean": round(self.mean, 6),
            "std": round(self.std, 6),
        }
