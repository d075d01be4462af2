"""Zig-zag boundary walker driven by a streaming change detector.

The walker turns by a fixed angle each step, in a direction given by its
current turn sign, and moves one step along the new heading:

    heading' = heading + turn_sign * turn_angle
    position' = position + step_size * (cos heading', sin heading')

Every step the image is sampled at the new position and the sample fed to
the detector. An alarm means the walker just crossed the region boundary:
the position is recorded as a boundary point, the turn sign flips so the
walk curves back toward the boundary, the detector sums reset and the
region roles swap. The walk closes once it returns within closure_radius
of the first recorded boundary point, after a minimum number of crossings.

Positions use the continuous frame in which pixel (i, j) has its centre at
(i + 0.5, j + 0.5); :func:`sample` alone works in pixel-index coordinates
(integer position = exact pixel centre), matching the array layout.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

from .cusum import (
    AdaptedState,
    ClassicConfig,
    ClassicState,
    Direction,
    Sidedness,
    adapted_reanchor,
    adapted_swap,
    adapted_update,
    classic_update,
    reset,
)
from .errors import BoundsError, LowContrastError, NoClosureError
from .imgio import GrayImage

# Walker positions must keep this margin from the canvas edge so that
# bilinear sampling stays defined (canvas [m, w-m] maps to index [0, w-1]).
_MARGIN = 0.5

_TWO_PI = 2.0 * math.pi

# Probe noise level below which the walk re-seeds the current-region mean
# from the crossing sample. That keeps the decision gap small right after
# each crossing, so the next one alarms on its first foreign sample - the
# fidelity that near-noiseless images allow. On noisy images the same
# small gap invites false alarms, so the mean restarts from the probed
# level of the region being entered instead, keeping the gap at full
# contrast.
_PROMPT_SIGMA = 5.0


def _normalize(heading: float) -> float:
    return heading % _TWO_PI


@dataclass(frozen=True)
class TrackerConfig:
    """Trajectory and detector parameters of the boundary walk.

    ``detector`` selects the change detector: "adapted" (region running
    means, the default), "classic" (parameters derived from the probe
    rays), or an explicit :class:`ClassicConfig`. ``initial_heading`` of
    ``None`` points the walker away from the region, so the first arc
    curves back across the boundary.

    ``adapted_window`` bounds the current-region mean to the most recent
    samples so boundary-blend values wash out of it; ``None`` keeps the
    full running mean. ``stall_steps`` is how long the walk may go
    without a crossing before its turn direction is judged stuck and
    flipped; ``None`` derives it from turn_angle (two full turns of the
    trajectory's circling period). ``refractory_steps`` is the number of
    samples after each crossing during which the detector charge is held
    at zero, giving the walker time to arc clear of the boundary before
    the next crossing can fire; ``None`` arms it only for the adapted
    detector on noisy images (a quarter of the circling period, the
    regime where a noisy blend sample can re-fire the detector in
    place), 0 disables it.
    """

    step_size: float = 1.0
    turn_angle: float = 0.35
    initial_heading: Optional[float] = None
    max_steps: int = 30000
    closure_radius: float = 3.0
    min_boundary_points: int = 8
    detector: Union[str, ClassicConfig] = "adapted"
    probe_length: float = 5.0
    contrast_floor: float = 1.0
    adapted_window: Optional[int] = 8
    stall_steps: Optional[int] = None
    refractory_steps: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ValueError(f"step_size must be > 0, got {self.step_size!r}")
        if not 0.0 < self.turn_angle < math.pi:
            raise ValueError(
                f"turn_angle must lie in (0, pi), got {self.turn_angle!r}"
            )
        if self.initial_heading is not None and not math.isfinite(
            self.initial_heading
        ):
            raise ValueError(f"initial_heading must be finite, got {self.initial_heading!r}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (math.isfinite(self.closure_radius) and self.closure_radius > 0):
            raise ValueError(f"closure_radius must be > 0, got {self.closure_radius!r}")
        if self.closure_radius < self.step_size:
            raise ValueError(
                f"closure_radius {self.closure_radius} must be >= step_size "
                f"{self.step_size}, else the walk can step over its start"
            )
        if self.min_boundary_points < 3:
            raise ValueError(
                f"min_boundary_points must be >= 3, got {self.min_boundary_points}"
            )
        if not isinstance(self.detector, ClassicConfig) and self.detector not in (
            "classic",
            "adapted",
        ):
            raise ValueError(
                f"detector must be 'classic', 'adapted' or a ClassicConfig, "
                f"got {self.detector!r}"
            )
        if not (math.isfinite(self.probe_length) and self.probe_length > 0):
            raise ValueError(f"probe_length must be > 0, got {self.probe_length!r}")
        if self.contrast_floor <= 0:
            raise ValueError(f"contrast_floor must be > 0, got {self.contrast_floor!r}")
        if self.adapted_window is not None and self.adapted_window < 1:
            raise ValueError(f"adapted_window must be >= 1, got {self.adapted_window}")
        if self.stall_steps is not None and self.stall_steps < 1:
            raise ValueError(f"stall_steps must be >= 1, got {self.stall_steps}")
        if self.refractory_steps is not None and self.refractory_steps < 0:
            raise ValueError(
                f"refractory_steps must be >= 0, got {self.refractory_steps}"
            )


@dataclass
class Pose:
    """Walker position, heading (normalized to [0, 2pi)) and turn sign."""

    x: float
    y: float
    heading: float
    turn_sign: int = 1

    def __post_init__(self):
        for name in ("x", "y", "heading"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.turn_sign not in (1, -1):
            raise ValueError(f"turn_sign must be +1 or -1, got {self.turn_sign!r}")
        self.heading = _normalize(self.heading)


@dataclass
class Boundary:
    """Ordered boundary crossings recorded by one walk.

    ``closed`` means the walk returned to its first crossing; the last
    point then lies within closure_radius of the first. ``directions``
    holds the crossing direction of each point and ``steps_used`` the
    number of walker steps consumed.
    """

    points: List[Tuple[float, float]]
    closed: bool
    directions: List[Direction] = field(default_factory=list)
    steps_used: int = 0


def sample(image: GrayImage, position: Sequence[float]) -> float:
    """Bilinear intensity at a continuous pixel-index position.

    The position domain is [0, width-1] x [0, height-1]; integer positions
    return the exact pixel value.
    """
    x, y = float(position[0]), float(position[1])
    w, h = image.width, image.height
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise BoundsError(
            f"sample position ({x}, {y}) outside [0, {w - 1}] x [0, {h - 1}]"
        )
    x0 = min(int(x), w - 1)
    y0 = min(int(y), h - 1)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    p = image.pixels
    top = (1.0 - fx) * float(p[y0, x0]) + fx * float(p[y0, x1])
    bottom = (1.0 - fx) * float(p[y1, x0]) + fx * float(p[y1, x1])
    return (1.0 - fy) * top + fy * bottom


def _sample_canvas(image: GrayImage, x: float, y: float) -> float:
    """Sample at a pixel-centre-frame position (centres at half-integers)."""
    return sample(image, (x - _MARGIN, y - _MARGIN))


def step(
    pose: Pose,
    cfg: TrackerConfig,
    bounds: Optional[Tuple[float, float, float, float]] = None,
) -> Pose:
    """Advance the walker by one turn-and-move step.

    With ``bounds`` (xmin, ymin, xmax, ymax) given, a resulting position
    outside them raises a bounds error; the caller decides how to recover.
    """
    heading = _normalize(pose.heading + pose.turn_sign * cfg.turn_angle)
    nx = pose.x + cfg.step_size * math.cos(heading)
    ny = pose.y + cfg.step_size * math.sin(heading)
    if bounds is not None:
        xmin, ymin, xmax, ymax = bounds
        if not (xmin <= nx <= xmax and ymin <= ny <= ymax):
            raise BoundsError(
                f"step to ({nx:.3f}, {ny:.3f}) leaves bounds "
                f"[{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )
    return Pose(x=nx, y=ny, heading=heading, turn_sign=pose.turn_sign)


def _advance(pose: Pose, cfg: TrackerConfig, bounds, turn: float) -> Pose:
    """Step after turning by ``turn``, with border reflection: mirror the
    heading off a violated border and retry, so the walk survives near
    the image frame."""
    heading = _normalize(pose.heading + turn)
    xmin, ymin, xmax, ymax = bounds
    for _ in range(3):
        nx = pose.x + cfg.step_size * math.cos(heading)
        ny = pose.y + cfg.step_size * math.sin(heading)
        bad_x = not xmin <= nx <= xmax
        bad_y = not ymin <= ny <= ymax
        if not bad_x and not bad_y:
            return Pose(x=nx, y=ny, heading=heading, turn_sign=pose.turn_sign)
        if bad_x:
            heading = _normalize(math.pi - heading)
        if bad_y:
            heading = _normalize(-heading)
    raise BoundsError(
        f"reflection cannot keep the walk inside the image from "
        f"({pose.x:.3f}, {pose.y:.3f})"
    )


def probe_samples(
    image: GrayImage,
    seed: Sequence[float],
    inside_dir: float,
    cfg: TrackerConfig,
) -> Tuple[List[float], List[float]]:
    """Sample two short rays from the seed: into the region and away from it.

    Rays are sampled every step_size/2 out to probe_length, excluding the
    seed itself (a seed on the boundary would contaminate both means).
    """
    sx, sy = float(seed[0]), float(seed[1])
    spacing = cfg.step_size / 2.0
    count = max(1, round(cfg.probe_length / spacing))
    inside: List[float] = []
    outside: List[float] = []
    for direction, bucket in ((inside_dir, inside), (inside_dir + math.pi, outside)):
        dx, dy = math.cos(direction), math.sin(direction)
        for k in range(1, count + 1):
            d = spacing * k
            bucket.append(_sample_canvas(image, sx + d * dx, sy + d * dy))
    return inside, outside


def _probe_stats(image, seed, inside_dir, cfg):
    """Probe both rays and check the contrast floor."""
    inside, outside = probe_samples(image, seed, inside_dir, cfg)
    mu_in = sum(inside) / len(inside)
    mu_out = sum(outside) / len(outside)
    if abs(mu_in - mu_out) < cfg.contrast_floor:
        raise LowContrastError(
            f"region means {mu_in:.3f} and {mu_out:.3f} differ by less than "
            f"{cfg.contrast_floor}; no boundary to track"
        )
    return inside, outside, mu_in, mu_out


def bootstrap_means(
    image: GrayImage,
    seed: Sequence[float],
    inside_dir: float,
    cfg: TrackerConfig,
) -> Tuple[float, float]:
    """Estimate the per-region mean intensities around the seed.

    Returns (mu_inside, mu_outside). A gap below cfg.contrast_floor means
    there is no detectable boundary at the seed.
    """
    _, _, mu_in, mu_out = _probe_stats(image, seed, inside_dir, cfg)
    return mu_in, mu_out


# median |x[i+1] - x[i]| for i.i.d. Gaussian x equals this times sigma
_MAD_DIFF_SCALE = math.sqrt(2.0) * 0.6744897501960817


def _noise_sigma(inside: Sequence[float], outside: Sequence[float]) -> float:
    """Noise dispersion of the two probe rays.

    A plain standard deviation would fold the intensity ramp at the region
    edge into the estimate and overstate the noise severalfold. Successive
    differences cancel the slowly varying level, and the median absolute
    difference ignores the one or two steps that straddle the edge.
    """
    diffs: List[float] = []
    for ray in (inside, outside):
        diffs.extend(abs(b - a) for a, b in zip(ray, ray[1:]))
    if not diffs:
        return 0.0
    return statistics.median(diffs) / _MAD_DIFF_SCALE


def derive_classic_config(
    image: GrayImage,
    seed: Sequence[float],
    inside_dir: float,
    cfg: TrackerConfig,
    sigma_floor: float = 1.0,
) -> ClassicConfig:
    """Tune a classic detector from the probe rays.

    The target mean is the outside (starting region) mean, the allowance is
    half the inter-region gap and the decision interval five noise standard
    deviations, floored so noiseless images keep a positive h.
    """
    inside, outside, mu_in, mu_out = _probe_stats(image, seed, inside_dir, cfg)
    sigma = max(_noise_sigma(inside, outside), sigma_floor)
    return ClassicConfig.from_shift(mu0=mu_out, delta=mu_in - mu_out, sigma=sigma)


def _opposite(direction: Direction) -> Direction:
    return Direction.DOWN if direction is Direction.UP else Direction.UP


def _armed_only(direction: Direction) -> Sidedness:
    """Sidedness with only the given crossing direction armed."""
    return Sidedness.UPPER if direction is Direction.UP else Sidedness.LOWER


def track(
    image: GrayImage,
    seed: Sequence[float],
    inside_dir: float,
    cfg: Optional[TrackerConfig] = None,
) -> Boundary:
    """Walk the zig-zag trajectory and return the closed boundary.

    ``seed`` is a continuous position on or near the region boundary and
    ``inside_dir`` the direction from the seed into the region. The walk
    starts in the outside region heading away from it, so the first arc
    curves back across the boundary.

    Successive crossings of a two-region boundary must alternate
    direction (into the region, out of it, back in, ...), so only the
    direction opposite the last crossing is armed at any time. An alarm
    on the disarmed side is a detector artifact, not a crossing: the
    walk discards it and clears that side's charge instead of turning.

    Raises a no-closure error when max_steps run out before the walk
    returns to its first crossing; the error carries the points found so
    far. A degenerate detector (region means collapsing onto each other)
    also ends the walk as no-closure.
    """
    if cfg is None:
        cfg = TrackerConfig()
    w, h = image.width, image.height
    if cfg.step_size >= min(w, h) / 2.0:
        raise ValueError(
            f"step_size {cfg.step_size} too large for a {w}x{h} image"
        )
    box = (_MARGIN, _MARGIN, w - _MARGIN, h - _MARGIN)
    sx, sy = float(seed[0]), float(seed[1])
    if not (box[0] <= sx <= box[2] and box[1] <= sy <= box[3]):
        raise BoundsError(
            f"seed ({sx}, {sy}) outside the walkable area "
            f"[{box[0]}, {box[2]}] x [{box[1]}, {box[3]}]"
        )

    inside, outside, mu_in, mu_out = _probe_stats(image, (sx, sy), inside_dir, cfg)
    # The walk starts outside, so the first crossing enters the region:
    # upward if the region is the brighter side, downward otherwise.
    expected = Direction.UP if mu_in > mu_out else Direction.DOWN

    sigma_noise = _noise_sigma(inside, outside)
    in_region = False  # the walk starts in the outside region

    use_classic = isinstance(cfg.detector, ClassicConfig) or cfg.detector == "classic"
    if use_classic:
        if isinstance(cfg.detector, ClassicConfig):
            classic_cfg = cfg.detector
        else:
            classic_cfg = ClassicConfig.from_shift(
                mu0=mu_out, delta=mu_in - mu_out, sigma=max(sigma_noise, 1.0)
            )
        classic_cfg = replace(classic_cfg, sidedness=_armed_only(expected))
        classic_state = ClassicState()
    else:
        prompt_seed = sigma_noise < _PROMPT_SIGMA
        # The window only serves the prompt path, washing boundary-blend
        # samples out of the mean between tightly spaced crossings. The
        # anchored path wants the opposite: a cumulative mean converges
        # instead of cycling, so the walk's state never repeats exactly
        # and frozen noise cannot lock it into a closed loop that
        # zig-zags in place forever.
        adapted_state = AdaptedState.from_samples(
            mu0=mu_in,
            samples=outside,
            window=cfg.adapted_window if prompt_seed else None,
        )

    heading = (
        cfg.initial_heading
        if cfg.initial_heading is not None
        else inside_dir + math.pi
    )
    pose = Pose(x=sx, y=sy, heading=heading, turn_sign=1)

    points: List[Tuple[float, float]] = []
    directions: List[Direction] = []
    closure_sq = cfg.closure_radius**2
    # Closing means RETURNING to the first crossing, so the walk must
    # first leave its neighborhood; otherwise milling around the start
    # would close on the spot.
    departed_sq = (2.0 * cfg.closure_radius) ** 2
    departed = False
    # Without a crossing for two full circling periods, the walk has
    # lost the boundary and is orbiting inside one region. Curling the
    # other way usually re-contacts it; the flip is paired with a
    # borrowed flip at the next crossing (owe_flip) so the circulation
    # sense survives. But curl flips only swap between the two circles
    # through the current pose, so when they keep failing the walk must
    # have drifted clear of the boundary: it then strikes out straight
    # for the last known boundary contact until the detector fires.
    stall_limit = (
        cfg.stall_steps
        if cfg.stall_steps is not None
        else math.ceil(2.0 * _TWO_PI / cfg.turn_angle)
    )
    stalls_in_a_row = 0
    searching = False
    # A straight search must not outlive its purpose. One aimed at a known
    # point ends once the pose has passed its closest approach and opened
    # two steps of fresh distance: the target was reached (or skimmed) and
    # marching on would carry the walk into whatever structure lies beyond.
    # A pin-escape kick has no target, so it gets a travel budget instead:
    # enough to clear the trap radius plus one orbit, no more.
    search_goal: Optional[Tuple[float, float]] = None
    search_min_d = 0.0
    kick_origin: Optional[Tuple[float, float]] = None
    orbit_diam = cfg.step_size / math.sin(cfg.turn_angle / 2.0)
    kick_range_sq = (4.0 * cfg.step_size + orbit_diam) ** 2
    # Consecutive crossings of a curling walk are chords of its orbit, so
    # they can never sit more than one orbit diameter apart. A detection
    # well beyond that is some other structure entirely (a second bright
    # object, a noise pocket) and accepting it would teleport the tracked
    # contour; the charge is discarded instead. Pin-escape kicks travel
    # straight on purpose and carry their own budget, so they are exempt.
    gate_sq = (orbit_diam + 2.0 * cfg.step_size) ** 2
    # Crossings can also keep firing without the walk going anywhere:
    # frozen noise near the boundary can trap the zig-zag in a loop
    # that re-crosses the same spot forever. An anchor that moves
    # whenever a crossing lands clear of it tells trapped from healthy:
    # a healthy walk parks under the anchor for at most a couple hundred
    # crossings before working free, a trapped one never moves it again.
    # When the anchor sits still too long the walk strikes out along
    # its recent direction of travel to get past the trap.
    pin_dist_sq = (4.0 * cfg.step_size) ** 2
    pin_limit = 150
    pin_anchor: Optional[Tuple[float, float]] = None
    pin_prev = (sx, sy)
    pin_count = 0
    # The circulation sense the walk settles into at its first crossing:
    # +1 or -1 once known. A crossing that ends a straight search uses it
    # to restore the original sense, so the walk keeps covering new
    # boundary instead of re-walking what it has.
    chi0 = 0
    # Right after a crossing the walker is still within a step or two of
    # the boundary, where one noisy blend sample can re-fire the detector.
    # Each such alarm flips the turn again and pins the walk in place, so
    # on noisy images the charge is held at zero until the walker has
    # arced clear. A quarter circling period stays well under the half
    # period that separates genuine crossings. Near-noiseless walks skip
    # the hold: blend samples carry no noise to re-fire on, and holding
    # would only delay prompt detections.
    if cfg.refractory_steps is not None:
        refractory = cfg.refractory_steps
    elif use_classic or prompt_seed:
        refractory = 0
    else:
        refractory = max(1, round(0.5 * math.pi / cfg.turn_angle))
    last_alarm: Optional[int] = None
    last_event = 0
    # The hold length is dithered a few samples per crossing (a hash of
    # the crossing count, so runs stay reproducible). Frozen noise plus
    # a converged mean makes the walk deterministic, and a constant hold
    # lets alarm timing lock into a periodic orbit that creeps along the
    # boundary too slowly to ever close; an aperiodic hold leaves such
    # orbits nothing to lock onto.
    hold = refractory
    # While the hold is on, the samples double as a crossing check: their
    # mean must look like the region the crossing claims to have entered.
    # A graze can charge the detector yet leave the walker on its old
    # side, and swapping roles on such an alarm strands every later
    # crossing on the wrong expectation; catching it here keeps the
    # bookkeeping tied to where the walker actually is.
    verify_buf: Optional[List[float]] = None
    verify_memo = "flip"
    owe_flip = False
    # Rejections are capped: under frozen noise a rolled-back walk can
    # retrace its path exactly, alarm at the same spot and be rejected
    # again without end. After two straight rollbacks the crossing
    # stands; if it really was a graze, the mismatched decision gap
    # fires again within a sample or two and the next verified crossing
    # realigns the bookkeeping.
    rollbacks = 0

    for steps_used in range(1, cfg.max_steps + 1):
        turn = 0.0 if searching else pose.turn_sign * cfg.turn_angle
        pose = _advance(pose, cfg, box, turn)
        value = _sample_canvas(image, pose.x, pose.y)

        if use_classic:
            alarm = classic_update(classic_state, classic_cfg, value)
        else:
            try:
                alarm = adapted_update(adapted_state, value)
            except ValueError:
                raise NoClosureError(
                    "region means collapsed onto each other; "
                    "the detector cannot continue",
                    steps=steps_used,
                    points=points,
                ) from None

        in_refractory = (
            last_alarm is not None and steps_used - last_alarm <= hold
        )
        if in_refractory:
            if use_classic:
                classic_state.s_plus = 0.0
                classic_state.s_minus = 0.0
            else:
                adapted_state.s_plus = 0.0
                adapted_state.s_minus = 0.0
            alarm = None
            if verify_buf is not None:
                verify_buf.append(value)
                if steps_used - last_alarm == hold:
                    mean = sum(verify_buf) / len(verify_buf)
                    verify_buf = None
                    claimed = mu_in if in_region else mu_out
                    other = mu_out if in_region else mu_in
                    if abs(mean - claimed) <= abs(mean - other):
                        rollbacks = 0
                    elif rollbacks >= 2:
                        rollbacks = 0
                    else:
                        # The walker never made it across: the alarm was
                        # a graze, not a crossing. Take the point back and
                        # restore the walk as if it had not fired.
                        rollbacks += 1
                        points.pop()
                        directions.pop()
                        if not points:
                            departed = False
                        in_region = not in_region
                        expected = _opposite(expected)
                        if verify_memo == "search":
                            searching = True
                            tx, ty = points[-1] if points else (sx, sy)
                            dx = tx - pose.x
                            dy = ty - pose.y
                            if dx * dx + dy * dy > cfg.step_size * cfg.step_size:
                                pose.heading = math.atan2(dy, dx)
                            search_goal = (tx, ty)
                            search_min_d = math.hypot(dx, dy)
                            kick_origin = None
                        elif verify_memo == "owe":
                            owe_flip = True
                        else:
                            pose.turn_sign = -pose.turn_sign
                        anchor = mu_in if in_region else mu_out
                        far = mu_out if in_region else mu_in
                        adapted_reanchor(adapted_state, mu0=far, mu1=anchor)
        elif alarm is not None and alarm.direction is not expected:
            # Artifact on the disarmed side (the classic detector masks
            # these itself). Clear the charge so it cannot refire.
            if alarm.direction is Direction.UP:
                adapted_state.s_plus = 0.0
            else:
                adapted_state.s_minus = 0.0
            alarm = None

        if alarm is not None and points and kick_origin is None:
            dx = pose.x - points[-1][0]
            dy = pose.y - points[-1][1]
            if dx * dx + dy * dy > gate_sq:
                # Too far from the last accepted crossing to be the same
                # contour; discard like a disarmed-side artifact.
                if use_classic:
                    reset(classic_state)
                elif alarm.direction is Direction.UP:
                    adapted_state.s_plus = 0.0
                else:
                    adapted_state.s_minus = 0.0
                alarm = None

        if alarm is not None:
            points.append((pose.x, pose.y))
            directions.append(alarm.direction)
            expected = _opposite(expected)
            in_region = not in_region
            last_alarm = steps_used
            last_event = steps_used
            stalls_in_a_row = 0
            # A crossing normally flips the curl so the walk arcs back
            # over the boundary, unless a stall recovery borrowed this
            # flip. One that ends a straight search instead restores the
            # walk's original circulation sense.
            if searching and chi0 != 0:
                pose.turn_sign = chi0 if in_region else -chi0
                verify_memo = "search"
                owe_flip = False
            elif owe_flip:
                owe_flip = False
                verify_memo = "owe"
            else:
                pose.turn_sign = -pose.turn_sign
                verify_memo = "flip"
            searching = False
            search_goal = None
            kick_origin = None
            if chi0 == 0:
                chi0 = pose.turn_sign if in_region else -pose.turn_sign
            if use_classic:
                # Re-target the detector to the region just entered.
                classic_cfg = replace(
                    classic_cfg,
                    mu0=mu_in if in_region else mu_out,
                    sidedness=_armed_only(expected),
                )
                reset(classic_state)
            else:
                anchor = mu_in if in_region else mu_out
                adapted_swap(adapted_state, value if prompt_seed else anchor)
                if refractory > 0:
                    verify_buf = []
                    k = len(points)
                    hold = refractory + (((k * 2654435761) & 0xFFFFFFFF) >> 30)
            if refractory > 0:
                if pin_anchor is None:
                    pin_anchor = (pose.x, pose.y)
                else:
                    dx = pose.x - pin_anchor[0]
                    dy = pose.y - pin_anchor[1]
                    if dx * dx + dy * dy >= pin_dist_sq:
                        pin_prev = pin_anchor
                        pin_anchor = (pose.x, pose.y)
                        pin_count = 0
                    else:
                        pin_count += 1
                        if pin_count >= pin_limit:
                            # Crossing in place: march out along the
                            # recent direction of travel until the
                            # detector fires beyond the trap.
                            searching = True
                            owe_flip = False
                            pose.heading = math.atan2(
                                pin_anchor[1] - pin_prev[1],
                                pin_anchor[0] - pin_prev[0],
                            )
                            pin_count = 0
                            kick_origin = (pose.x, pose.y)
                            search_goal = None
        elif not in_refractory and steps_used - last_event >= stall_limit:
            # Not a crossing: no point is recorded and the expected
            # direction stands.
            stalls_in_a_row += 1
            if not searching and stalls_in_a_row <= 2:
                # Cheap first: reverse the curl so the orbit sweeps the
                # mirror circle, borrowing the next crossing's flip so
                # the circulation sense survives.
                pose.turn_sign = -pose.turn_sign
                owe_flip = not owe_flip
            else:
                # Repeated alarm-less stalls mean neither circle through
                # this pose touches the boundary: strike out straight for
                # the last known boundary contact until the detector
                # fires, then restore circulation at that crossing.
                searching = True
                owe_flip = False
                tx, ty = points[-1] if points else (sx, sy)
                dx = tx - pose.x
                dy = ty - pose.y
                # Arriving without an alarm means the path skimmed the
                # target tangentially (crossings land a hair past the
                # edge). Keep the heading and march through instead of
                # re-aiming at a point underfoot.
                if dx * dx + dy * dy > cfg.step_size * cfg.step_size:
                    pose.heading = math.atan2(dy, dx)
                search_goal = (tx, ty)
                search_min_d = math.hypot(dx, dy)
                kick_origin = None
            last_event = steps_used

        if searching:
            if search_goal is not None:
                d = math.hypot(search_goal[0] - pose.x, search_goal[1] - pose.y)
                if d < search_min_d:
                    search_min_d = d
                elif d > search_min_d + 2.0 * cfg.step_size:
                    searching = False
            elif kick_origin is not None:
                dx = pose.x - kick_origin[0]
                dy = pose.y - kick_origin[1]
                if dx * dx + dy * dy > kick_range_sq:
                    searching = False
            if not searching:
                # Search spent: fall back to circling with the original
                # sense and let the stall watchdog decide what comes next.
                search_goal = None
                kick_origin = None
                if chi0 != 0:
                    pose.turn_sign = chi0 if in_region else -chi0

        if points:
            dx = pose.x - points[0][0]
            dy = pose.y - points[0][1]
            dist_sq = dx * dx + dy * dy
            if not departed:
                departed = dist_sq > departed_sq
            elif (
                not searching
                and len(points) >= cfg.min_boundary_points
                and dist_sq <= closure_sq
            ):
                # Keep the closure invariant: the walk ends at a point
                # within closure_radius of the first crossing.
                if (pose.x, pose.y) != points[-1]:
                    points.append((pose.x, pose.y))
                    directions.append(directions[-1])
                return Boundary(
                    points=points,
                    closed=True,
                    directions=directions,
                    steps_used=steps_used,
                )

    raise NoClosureError(
        f"no closure after {cfg.max_steps} steps "
        f"({len(points)} boundary points found)",
        steps=cfg.max_steps,
        points=points,
    )
