"""Image ingestion, serialization, and synthetic phantom generation.

Grayscale images are nonnegative 16-bit grids; clinical-style inputs occupy
a 12-bit range. Supported formats are PGM (P2/P5, maxval up to 65535, 16-bit
samples big-endian) and headerless raw 16-bit with caller-provided geometry.

Phantoms are fully determined by their spec, including the RNG seed. The
noise generator is numpy's PCG64 via ``default_rng``; its identity is
exported as :data:`RNG_ALGORITHM` so run reports can record it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FormatError
from .mask import BinaryMask

RNG_ALGORITHM = "numpy.random.default_rng (PCG64)"

MAX_INTENSITY = 65535


@dataclass
class GrayImage:
    """2-D grid of nonnegative intensities, stored as uint16 (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("image must contain at least one pixel")
        if np.issubdtype(arr.dtype, np.floating):
            if not np.isfinite(arr).all():
                raise ValueError("image intensities must be finite")
            arr = np.rint(arr)
        if (arr < 0).any() or (arr > MAX_INTENSITY).any():
            raise ValueError(f"intensities must lie in [0, {MAX_INTENSITY}]")
        self.pixels = np.ascontiguousarray(arr.astype(np.uint16))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class Series:
    """Ordered dynamic series of equally sized frames."""

    frames: List[GrayImage]

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a series needs at least one frame")
        w, h = self.frames[0].width, self.frames[0].height
        for k, frame in enumerate(self.frames):
            if (frame.width, frame.height) != (w, h):
                raise ValueError(
                    f"frame {k} is {frame.width}x{frame.height}, expected {w}x{h}"
                )


def select_timepoint(series: Series, index: int = 4) -> GrayImage:
    """Pick one frame by 1-based index; frame 4 is the usual steady state."""
    if not 1 <= index <= len(series.frames):
        raise ValueError(
            f"time-point {index} out of range 1..{len(series.frames)}"
        )
    return series.frames[index - 1]


# ---------------------------------------------------------------------------
# PGM and raw16

def _tokenize_pgm_header(data: bytes):
    """Yield (token, end_offset) for whitespace-separated header fields,
    skipping '#' comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c in b" \t\r\n\x0b\x0c":
            i += 1
        elif c == b"#":
            j = data.find(b"\n", i)
            i = n if j < 0 else j + 1
        else:
            j = i
            while j < n and data[j : j + 1] not in b" \t\r\n\x0b\x0c#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> GrayImage:
    """Read a P2 (ASCII) or P5 (binary) PGM file."""
    data = Path(path).read_bytes()
    tokens = _tokenize_pgm_header(data)

    def next_token(what: str):
        try:
            return next(tokens)
        except StopIteration:
            raise FormatError(f"truncated PGM header: missing {what}") from None

    magic, _ = next_token("magic")
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file: magic {magic!r}")

    header_ints = []
    end = 0
    for what in ("width", "height", "maxval"):
        tok, end = next_token(what)
        try:
            header_ints.append(int(tok))
        except ValueError:
            raise FormatError(f"bad PGM {what}: {tok!r}") from None
    width, height, maxval = header_ints
    if width < 1 or height < 1:
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    if not 1 <= maxval <= MAX_INTENSITY:
        raise FormatError(f"PGM maxval {maxval} outside 1..{MAX_INTENSITY}")

    count = width * height
    if magic == b"P5":
        raster = data[end + 1 :]  # exactly one whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(raster) < need:
            raise FormatError(
                f"truncated PGM raster: need {need} bytes, have {len(raster)}"
            )
        values = np.frombuffer(raster[:need], dtype=dtype).astype(np.uint16)
    else:
        try:
            values = np.array(
                [int(tok) for tok, _ in tokens][:count], dtype=np.uint16
            )
        except (ValueError, OverflowError):
            raise FormatError("bad sample value in ASCII PGM") from None
        if values.size < count:
            raise FormatError(
                f"truncated ASCII PGM: need {count} samples, have {values.size}"
            )
    return GrayImage(values.reshape(height, width))


def write_pgm(image: GrayImage, path) -> None:
    """Write binary (P5) PGM. 16-bit samples are big-endian per convention."""
    peak = int(image.pixels.max(initial=0))
    maxval = MAX_INTENSITY if peak > 255 else 255
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    if maxval > 255:
        body = image.pixels.astype(">u2").tobytes()
    else:
        body = image.pixels.astype("u1").tobytes()
    Path(path).write_bytes(header + body)


def read_raw16(path, width: int, height: int, endianness: str = "little") -> GrayImage:
    """Read headerless 16-bit raw data, row-major, with the given geometry."""
    if endianness not in ("little", "big"):
        raise ValueError(f"endianness must be 'little' or 'big', got {endianness!r}")
    if width < 1 or height < 1:
        raise ValueError(f"bad raw dimensions {width}x{height}")
    data = Path(path).read_bytes()
    need = 2 * width * height
    if len(data) != need:
        raise FormatError(
            f"raw16 size mismatch: {width}x{height} needs {need} bytes, "
            f"file has {len(data)}"
        )
    dtype = np.dtype("<u2") if endianness == "little" else np.dtype(">u2")
    values = np.frombuffer(data, dtype=dtype).astype(np.uint16)
    return GrayImage(values.reshape(height, width))


def read_raw16_series(
    path, width: int, height: int, frames: int, endianness: str = "little"
) -> Series:
    """Read a dynamic series stored as concatenated raw 16-bit frames."""
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    if endianness not in ("little", "big"):
        raise ValueError(f"endianness must be 'little' or 'big', got {endianness!r}")
    data = Path(path).read_bytes()
    need = 2 * width * height * frames
    if len(data) != need:
        raise FormatError(
            f"raw16 series size mismatch: {frames} frames of {width}x{height} "
            f"need {need} bytes, file has {len(data)}"
        )
    dtype = np.dtype("<u2") if endianness == "little" else np.dtype(">u2")
    values = np.frombuffer(data, dtype=dtype).astype(np.uint16)
    stack = values.reshape(frames, height, width)
    return Series([GrayImage(frame) for frame in stack])


def write_mask_pgm(m: BinaryMask, path) -> None:
    """Serialize a mask as P5 PGM with 1 -> 255 and 0 -> 0."""
    write_pgm(GrayImage(m.pixels.astype(np.uint16) * 255), path)


def read_mask_pgm(path) -> BinaryMask:
    """Read a mask back from PGM; any nonzero sample counts as 1."""
    image = read_pgm(path)
    return BinaryMask((image.pixels != 0).astype(np.uint8))


# ---------------------------------------------------------------------------
# Synthetic phantoms

def _center_grid(width: int, height: int):
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    return xs[np.newaxis, :], ys[:, np.newaxis]


@dataclass(frozen=True)
class Disk:
    """Filled circle; membership is strict (centre distance < r)."""

    cx: float
    cy: float
    r: float
    intensity: int
    truth: bool = False

    def membership(self, px, py):
        return (px - self.cx) ** 2 + (py - self.cy) ** 2 < self.r**2

    def bbox(self):
        return self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r


@dataclass(frozen=True)
class Annulus:
    """Ring with r_inner <= centre distance < r_outer."""

    cx: float
    cy: float
    r_inner: float
    r_outer: float
    intensity: int
    truth: bool = False

    def __post_init__(self):
        if not 0 <= self.r_inner < self.r_outer:
            raise ValueError(
                f"annulus radii must satisfy 0 <= r_inner < r_outer, "
                f"got {self.r_inner}, {self.r_outer}"
            )

    def membership(self, px, py):
        d2 = (px - self.cx) ** 2 + (py - self.cy) ** 2
        return (d2 >= self.r_inner**2) & (d2 < self.r_outer**2)

    def bbox(self):
        r = self.r_outer
        return self.cx - r, self.cy - r, self.cx + r, self.cy + r


@dataclass(frozen=True)
class HalfPlane:
    """Pixels whose centre satisfies x cos(angle) + y sin(angle) >= offset."""

    angle: float
    offset: float
    intensity: int
    truth: bool = False

    def membership(self, px, py):
        return px * math.cos(self.angle) + py * math.sin(self.angle) >= self.offset

    def bbox(self):
        return None  # always inside any canvas


Shape = Union[Disk, Annulus, HalfPlane]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise model: none, gaussian, or gaussian plus salt outliers.

    Salt replaces each pixel independently with probability
    ``outlier_fraction`` by ``outlier_value``, after the gaussian component.
    """

    kind: str = "none"
    sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_value: int = MAX_INTENSITY

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "gaussian_salt"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.outlier_fraction <= 0.05:
            raise ValueError(
                f"outlier_fraction must lie in [0, 0.05], got {self.outlier_fraction}"
            )
        if not 0 <= self.outlier_value <= MAX_INTENSITY:
            raise ValueError(f"outlier_value outside [0, {MAX_INTENSITY}]")


@dataclass
class PhantomSpec:
    """Deterministic recipe for a synthetic image plus its truth mask."""

    width: int
    height: int
    shapes: List[Shape]
    background: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rng_seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad canvas {self.width}x{self.height}")
        if not 0 <= self.background <= MAX_INTENSITY:
            raise ValueError(f"background outside [0, {MAX_INTENSITY}]")
        for shape in self.shapes:
            if not 0 <= shape.intensity <= MAX_INTENSITY:
                raise ValueError(
                    f"shape intensity {shape.intensity} outside [0, {MAX_INTENSITY}]"
                )
            box = shape.bbox()
            if box is not None:
                x0, y0, x1, y1 = box
                if x0 < 0 or y0 < 0 or x1 > self.width or y1 > self.height:
                    raise ValueError(
                        f"shape {shape} extends outside the {self.width}x{self.height} canvas"
                    )

    @classmethod
    def from_dict(cls, doc: dict) -> "PhantomSpec":
        try:
            shapes = [_shape_from_dict(s) for s in doc.get("shapes", [])]
            noise = _noise_from_dict(doc.get("noise", {"kind": "none"}))
            return cls(
                width=int(doc["width"]),
                height=int(doc["height"]),
                shapes=shapes,
                background=int(doc.get("background", 0)),
                noise=noise,
                rng_seed=int(doc.get("rng_seed", 0)),
            )
        except KeyError as exc:
            raise ValueError(f"phantom spec missing field {exc}") from None

    @classmethod
    def from_json(cls, path) -> "PhantomSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed phantom spec JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ValueError("phantom spec JSON must be an object")
        return cls.from_dict(doc)


def _shape_from_dict(s: dict) -> Shape:
    kind = s.get("type")
    common = {"intensity": int(s["intensity"]), "truth": bool(s.get("truth", False))}
    if kind == "disk":
        return Disk(cx=float(s["cx"]), cy=float(s["cy"]), r=float(s["r"]), **common)
    if kind == "annulus":
        return Annulus(
            cx=float(s["cx"]),
            cy=float(s["cy"]),
            r_inner=float(s["r_inner"]),
            r_outer=float(s["r_outer"]),
            **common,
        )
    if kind == "half_plane":
        return HalfPlane(angle=float(s["angle"]), offset=float(s["offset"]), **common)
    raise ValueError(f"unknown shape type {kind!r}")


def _noise_from_dict(n: dict) -> NoiseSpec:
    kind = n.get("kind", "none")
    return NoiseSpec(
        kind=kind,
        sigma=float(n.get("sigma", 0.0)),
        outlier_fraction=float(n.get("outlier_fraction", 0.0)),
        outlier_value=int(n.get("outlier_value", MAX_INTENSITY)),
    )


def gen_phantom(spec: PhantomSpec) -> Tuple[GrayImage, BinaryMask]:
    """Render a phantom image and its ground-truth mask.

    Shapes paint in list order (later shapes overwrite earlier ones); the
    truth mask is the union of shapes flagged as truth. Noise is applied
    after painting and the result clamped to the 16-bit intensity range.
    """
    px, py = _center_grid(spec.width, spec.height)
    canvas = np.full((spec.height, spec.width), float(spec.background))
    truth = np.zeros((spec.height, spec.width), dtype=bool)
    for shape in spec.shapes:
        member = shape.membership(px, py)
        canvas[member] = float(shape.intensity)
        if shape.truth:
            truth |= member

    rng = np.random.default_rng(spec.rng_seed)
    if spec.noise.kind in ("gaussian", "gaussian_salt"):
        canvas = canvas + rng.normal(0.0, spec.noise.sigma, canvas.shape)
    if spec.noise.kind == "gaussian_salt":
        salt = rng.random(canvas.shape) < spec.noise.outlier_fraction
        canvas[salt] = float(spec.noise.outlier_value)

    canvas = np.clip(np.rint(canvas), 0, MAX_INTENSITY)
    return GrayImage(canvas), BinaryMask(truth.astype(np.uint8))
