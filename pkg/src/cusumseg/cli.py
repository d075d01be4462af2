"""Command-line front end for the segmentation pipeline.

Subcommands:

* ``segment``  -- trace a region boundary on one image, write the ROI mask
* ``baseline`` -- global-threshold segmentation of one image
* ``dice``     -- Dice overlap of two mask files
* ``phantom``  -- render a synthetic image plus its truth mask from a JSON spec
* ``eval``     -- batch comparison of methods over seeded phantoms

Every run prints a JSON report to standard output carrying the command,
every effective parameter (defaults included), the outputs written, the
results, and wall-clock timing in milliseconds, so a run is reproducible
from its report alone.

Exit codes: 0 success; 1 input or usage error; 2 the walk found no closed
boundary (or no detectable contrast) on an otherwise valid input.

Inputs are PGM (P2/P5) or headerless 16-bit raw. A raw file needs a JSON
sidecar next to it (``<file>.json``) with width and height, optionally
endianness ("little"/"big"), frames, and the 1-based timepoint to select
from a multi-frame series (default 4).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CusumSegError,
    FormatError,
    LowContrastError,
    NoClosureError,
)
from .imgio import (
    RNG_ALGORITHM,
    Annulus,
    Disk,
    GrayImage,
    PhantomSpec,
    gen_phantom,
    read_mask_pgm,
    read_pgm,
    read_raw16,
    read_raw16_series,
    select_timepoint,
    write_mask_pgm,
    write_pgm,
)
from .mask import area, rasterize
from .metrics import DiceReport, dice, threshold_segment
from .tracker import TrackerConfig, bootstrap_means, derive_classic_config, track

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CLOSURE = 2

_EVAL_METHODS = ("adapted", "classic", "threshold")
_THRESHOLD_CANDIDATES = 16


@dataclass
class RunReport:
    """Everything needed to reproduce and interpret one CLI run."""

    command: str
    parameters: Dict
    outputs: Dict = field(default_factory=dict)
    results: Dict = field(default_factory=dict)
    timing_ms: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "outputs": self.outputs,
            "results": self.results,
            "timing_ms": round(self.timing_ms, 3),
        }


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the exit-code contract
    reserves 2 for no-closure, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load_image(path) -> Tuple[GrayImage, Dict]:
    """Read a PGM or sidecar-described raw16 image; returns (image, meta)."""
    p = Path(path)
    with p.open("rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P5"):
        return read_pgm(p), {"format": "pgm"}
    sidecar = Path(str(p) + ".json")
    if not sidecar.exists():
        raise FormatError(
            f"{p} is not a PGM file and no geometry sidecar {sidecar.name} "
            "exists; raw16 input needs a JSON sidecar with width and height"
        )
    try:
        doc = json.loads(sidecar.read_text())
        width = int(doc["width"])
        height = int(doc["height"])
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed sidecar {sidecar}: {exc}") from None
    except KeyError as exc:
        raise FormatError(f"sidecar {sidecar} missing field {exc}") from None
    endianness = doc.get("endianness", "little")
    frames = int(doc.get("frames", 1))
    meta = {
        "format": "raw16",
        "width": width,
        "height": height,
        "endianness": endianness,
        "frames": frames,
    }
    if frames == 1:
        return read_raw16(p, width, height, endianness), meta
    timepoint = int(doc.get("timepoint", 4))
    meta["timepoint"] = timepoint
    series = read_raw16_series(p, width, height, frames, endianness)
    return select_timepoint(series, timepoint), meta


def _tracker_config(args, detector: str) -> TrackerConfig:
    return TrackerConfig(
        step_size=args.step,
        turn_angle=args.turn_angle,
        max_steps=args.max_steps,
        closure_radius=args.closure_radius,
        detector=detector,
    )


def _tracker_parameters(cfg: TrackerConfig) -> Dict:
    return {
        "step": cfg.step_size,
        "turn_angle": cfg.turn_angle,
        "max_steps": cfg.max_steps,
        "closure_radius": cfg.closure_radius,
        "min_boundary_points": cfg.min_boundary_points,
        "probe_length": cfg.probe_length,
        "contrast_floor": cfg.contrast_floor,
    }


def cmd_segment(args) -> int:
    image, input_meta = _load_image(args.input)
    cfg = _tracker_config(args, args.detector)
    seed = (args.seed_x, args.seed_y)

    started = time.perf_counter()
    boundary = track(image, seed, args.inside_dir, cfg)
    roi = rasterize(boundary, image.width, image.height)
    elapsed_ms = (time.perf_counter() - started) * 1000.0

    write_mask_pgm(roi, args.output)
    outputs = {"mask": str(args.output)}
    if args.boundary_out:
        lines = [f"{x!r},{y!r}" for x, y in boundary.points]
        Path(args.boundary_out).write_text("\n".join(lines) + "\n")
        outputs["boundary"] = str(args.boundary_out)

    mu_in, mu_out = bootstrap_means(image, seed, args.inside_dir, cfg)
    results = {
        "closed": boundary.closed,
        "boundary_points": len(boundary.points),
        "steps_used": boundary.steps_used,
        "mask_area": area(roi),
        "mu_inside": round(mu_in, 3),
        "mu_outside": round(mu_out, 3),
    }
    if args.detector == "classic":
        ccfg = derive_classic_config(image, seed, args.inside_dir, cfg)
        results["classic_mu0"] = round(ccfg.mu0, 3)
        results["classic_k"] = round(ccfg.k, 3)
        results["classic_h"] = round(ccfg.h, 3)

    report = RunReport(
        command="segment",
        parameters={
            "input": str(args.input),
            "output": str(args.output),
            "seed_x": args.seed_x,
            "seed_y": args.seed_y,
            "inside_dir": args.inside_dir,
            "detector": args.detector,
            "boundary_out": str(args.boundary_out) if args.boundary_out else None,
            **_tracker_parameters(cfg),
            **input_meta,
        },
        outputs=outputs,
        results=results,
        timing_ms=elapsed_ms,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_baseline(args) -> int:
    image, input_meta = _load_image(args.input)
    started = time.perf_counter()
    roi = threshold_segment(image, args.threshold, args.keep_largest)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    write_mask_pgm(roi, args.output)
    report = RunReport(
        command="baseline",
        parameters={
            "input": str(args.input),
            "output": str(args.output),
            "threshold": args.threshold,
            "keep_largest": args.keep_largest,
            **input_meta,
        },
        outputs={"mask": str(args.output)},
        results={"mask_area": area(roi)},
        timing_ms=elapsed_ms,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_dice(args) -> int:
    mask_a = read_mask_pgm(args.mask_a)
    mask_b = read_mask_pgm(args.mask_b)
    started = time.perf_counter()
    value = dice(mask_a, mask_b)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    report = RunReport(
        command="dice",
        parameters={"mask_a": str(args.mask_a), "mask_b": str(args.mask_b)},
        results={"dice": value},
        timing_ms=elapsed_ms,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_phantom(args) -> int:
    spec = PhantomSpec.from_json(args.spec)
    started = time.perf_counter()
    image, truth = gen_phantom(spec)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    write_pgm(image, args.output)
    write_mask_pgm(truth, args.truth_out)
    report = RunReport(
        command="phantom",
        parameters={
            "spec": str(args.spec),
            "output": str(args.output),
            "truth_out": str(args.truth_out),
            "width": spec.width,
            "height": spec.height,
            "background": spec.background,
            "shapes": len(spec.shapes),
            "noise": spec.noise.kind,
            "rng_seed": spec.rng_seed,
            "rng": RNG_ALGORITHM,
        },
        outputs={"image": str(args.output), "truth": str(args.truth_out)},
        results={"truth_area": area(truth)},
        timing_ms=elapsed_ms,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _auto_seed(template: PhantomSpec) -> Optional[Tuple[Tuple[float, float], float]]:
    """Seed on the first truth shape's top rim, pointing down at its centre."""
    for shape in template.shapes:
        if not shape.truth:
            continue
        if isinstance(shape, Disk):
            return (shape.cx, shape.cy - shape.r), math.pi / 2.0
        if isinstance(shape, Annulus):
            return (shape.cx, shape.cy - shape.r_outer), math.pi / 2.0
    return None


def cmd_eval(args) -> int:
    template = PhantomSpec.from_json(args.spec)
    if args.count < 1:
        raise ValueError(f"--count must be >= 1, got {args.count}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ValueError("--methods must name at least one method")
    for m in methods:
        if m not in _EVAL_METHODS:
            raise ValueError(
                f"unknown method {m!r}; choose from {', '.join(_EVAL_METHODS)}"
            )

    seed = inside_dir = None
    if any(m in ("adapted", "classic") for m in methods):
        if (
            args.seed_x is not None
            and args.seed_y is not None
            and args.inside_dir is not None
        ):
            seed = (args.seed_x, args.seed_y)
            inside_dir = args.inside_dir
        else:
            auto = _auto_seed(template)
            if auto is None:
                raise ValueError(
                    "cannot derive a seed point from the phantom spec; pass "
                    "--seed-x, --seed-y and --inside-dir"
                )
            seed, inside_dir = auto

    started = time.perf_counter()
    cases = []
    for i in range(args.count):
        spec_i = replace(template, rng_seed=args.rng_seed + i)
        image, truth = gen_phantom(spec_i)
        cases.append((spec_i.rng_seed, image, truth))

    per_image = [
        {"rng_seed": s, "dice": {}, "timing_ms": {}} for s, _, _ in cases
    ]
    scores: Dict[str, List[float]] = {}
    failures: Dict[str, int] = {}

    for method in methods:
        if method == "threshold":
            continue
        cfg = _tracker_config(args, method)
        scores[method] = []
        failures[method] = 0
        for record, (_, image, truth) in zip(per_image, cases):
            t0 = time.perf_counter()
            try:
                boundary = track(image, seed, inside_dir, cfg)
                roi = rasterize(boundary, image.width, image.height)
                value = dice(roi, truth)
            except (NoClosureError, LowContrastError):
                value = 0.0  # a failed segmentation scores zero, run continues
                failures[method] += 1
            dt = (time.perf_counter() - t0) * 1000.0
            scores[method].append(value)
            record["dice"][method] = round(value, 6)
            record["timing_ms"][method] = round(dt, 3)

    chosen_threshold = None
    if "threshold" in methods:
        # The baseline gets the most favourable single threshold: the best
        # of evenly spaced candidates over the batch intensity range.
        lo = min(float(image.pixels.min()) for _, image, _ in cases)
        hi = max(float(image.pixels.max()) for _, image, _ in cases)
        best_mean = -1.0
        for t in np.linspace(lo, hi, _THRESHOLD_CANDIDATES):
            ds = [
                dice(threshold_segment(image, float(t)), truth)
                for _, image, truth in cases
            ]
            mean = sum(ds) / len(ds)
            if mean > best_mean:
                best_mean = mean
                chosen_threshold = float(t)
        scores["threshold"] = []
        failures["threshold"] = 0
        for record, (_, image, truth) in zip(per_image, cases):
            t0 = time.perf_counter()
            value = dice(threshold_segment(image, chosen_threshold), truth)
            dt = (time.perf_counter() - t0) * 1000.0
            scores["threshold"].append(value)
            record["dice"]["threshold"] = round(value, 6)
            record["timing_ms"]["threshold"] = round(dt, 3)

    elapsed_ms = (time.perf_counter() - started) * 1000.0
    reports = {m: DiceReport(m, scores[m]).to_dict() for m in methods}
    report = RunReport(
        command="eval",
        parameters={
            "spec": str(args.spec),
            "count": args.count,
            "rng_seed": args.rng_seed,
            "methods": methods,
            "seed_x": None if seed is None else seed[0],
            "seed_y": None if seed is None else seed[1],
            "inside_dir": inside_dir,
            "threshold_candidates": _THRESHOLD_CANDIDATES,
            "rng": RNG_ALGORITHM,
            **_tracker_parameters(_tracker_config(args, "adapted")),
        },
        results={
            "reports": reports,
            "per_image": per_image,
            "failures": failures,
            "chosen_threshold": chosen_threshold,
        },
        timing_ms=elapsed_ms,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    # Defaults come from the library config so the two cannot drift apart.
    defaults = TrackerConfig()
    p.add_argument(
        "--step",
        type=float,
        default=defaults.step_size,
        help="walk step size in pixels",
    )
    p.add_argument(
        "--turn-angle",
        type=float,
        default=defaults.turn_angle,
        help="turn per step in radians",
    )
    p.add_argument(
        "--max-steps", type=int, default=defaults.max_steps, help="step budget"
    )
    p.add_argument(
        "--closure-radius",
        type=float,
        default=defaults.closure_radius,
        help="closure distance to the first boundary point, in pixels",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cusumseg",
        description="Boundary-walk segmentation with CUSUM change detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="trace one region boundary to a mask")
    seg.add_argument("--input", required=True, help="PGM or raw16+sidecar image")
    seg.add_argument("--output", required=True, help="mask PGM to write")
    seg.add_argument("--seed-x", type=float, required=True)
    seg.add_argument("--seed-y", type=float, required=True)
    seg.add_argument(
        "--inside-dir",
        type=float,
        required=True,
        help="direction from the seed into the region, radians",
    )
    seg.add_argument(
        "--detector", choices=("classic", "adapted"), default="adapted"
    )
    _add_tracker_flags(seg)
    seg.add_argument(
        "--boundary-out", default=None, help="also write boundary points as CSV"
    )
    seg.set_defaults(func=cmd_segment)

    base = sub.add_parser("baseline", help="global-threshold segmentation")
    base.add_argument("--input", required=True)
    base.add_argument("--output", required=True)
    base.add_argument("--threshold", type=float, required=True)
    base.add_argument(
        "--keep-largest",
        action="store_true",
        help="keep only the largest 4-connected component",
    )
    base.set_defaults(func=cmd_baseline)

    dce = sub.add_parser("dice", help="Dice overlap of two mask PGMs")
    dce.add_argument("mask_a")
    dce.add_argument("mask_b")
    dce.set_defaults(func=cmd_dice)

    phm = sub.add_parser("phantom", help="render a synthetic phantom from JSON")
    phm.add_argument("--spec", required=True, help="phantom spec JSON")
    phm.add_argument("--output", required=True, help="image PGM to write")
    phm.add_argument("--truth-out", required=True, help="truth mask PGM to write")
    phm.set_defaults(func=cmd_phantom)

    evl = sub.add_parser("eval", help="batch method comparison over phantoms")
    evl.add_argument("--spec", required=True, help="phantom template JSON")
    evl.add_argument("--count", type=int, required=True, help="number of phantoms")
    evl.add_argument(
        "--rng-seed", type=int, default=0, help="seed of the first phantom"
    )
    evl.add_argument(
        "--methods",
        default="adapted,threshold",
        help="comma-separated subset of adapted, classic, threshold",
    )
    evl.add_argument("--seed-x", type=float, default=None)
    evl.add_argument("--seed-y", type=float, default=None)
    evl.add_argument(
        "--inside-dir",
        type=float,
        default=None,
        help="override the auto-derived seed direction",
    )
    _add_tracker_flags(evl)
    evl.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NoClosureError, LowContrastError) as exc:
        diagnostic = {"error": str(exc)}
        if isinstance(exc, NoClosureError):
            diagnostic["steps"] = exc.steps
            diagnostic["points_found"] = len(exc.points)
        print(json.dumps(diagnostic), file=sys.stderr)
        return EXIT_NO_CLOSURE
    except (CusumSegError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
