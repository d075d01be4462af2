"""Region segmentation by CUSUM change detection along a zig-zag walk.

The pipeline: walk a zig-zag trajectory across a region boundary
(:mod:`cusumseg.tracker`), detect each crossing as a change-point
(:mod:`cusumseg.cusum`), fill the closed boundary into a binary mask
(:mod:`cusumseg.mask`), and score it against a reference with the Dice
index (:mod:`cusumseg.metrics`). :mod:`cusumseg.imgio` reads and writes
images and generates the synthetic phantoms used for validation;
:mod:`cusumseg.cli` wires everything into a command line.
"""

from .cusum import (
    AdaptedState,
    Alarm,
    ClassicConfig,
    ClassicState,
    Direction,
    Sidedness,
    adapted_swap,
    adapted_update,
    classic_update,
    first_alarm,
    reset,
    update_with_score,
)
from .errors import (
    BoundsError,
    CusumSegError,
    FormatError,
    LowContrastError,
    NoClosureError,
)
from .imgio import (
    Annulus,
    Disk,
    GrayImage,
    HalfPlane,
    NoiseSpec,
    PhantomSpec,
    Series,
    gen_phantom,
    read_mask_pgm,
    read_pgm,
    read_raw16,
    read_raw16_series,
    select_timepoint,
    write_mask_pgm,
    write_pgm,
)
from .mask import BinaryMask, area, intersect, rasterize
from .metrics import DiceReport, aggregate, dice, threshold_segment
from .tracker import (
    Boundary,
    Pose,
    TrackerConfig,
    bootstrap_means,
    derive_classic_config,
    sample,
    step,
    track,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptedState",
    "Alarm",
    "Annulus",
    "BinaryMask",
    "Boundary",
    "BoundsError",
    "ClassicConfig",
    "ClassicState",
    "CusumSegError",
    "DiceReport",
    "Direction",
    "Disk",
    "FormatError",
    "GrayImage",
    "HalfPlane",
    "LowContrastError",
    "NoClosureError",
    "NoiseSpec",
    "PhantomSpec",
    "Pose",
    "Series",
    "Sidedness",
    "TrackerConfig",
    "adapted_swap",
    "adapted_update",
    "aggregate",
    "area",
    "bootstrap_means",
    "classic_update",
    "derive_classic_config",
    "dice",
    "first_alarm",
    "gen_phantom",
    "intersect",
    "rasterize",
    "read_mask_pgm",
    "read_pgm",
    "read_raw16",
    "read_raw16_series",
    "reset",
    "sample",
    "select_timepoint",
    "step",
    "threshold_segment",
    "track",
    "update_with_score",
    "write_mask_pgm",
    "write_pgm",
]
