"""Streaming CUSUM change-point detectors.

Three forms, all operating sample by sample:

* ``classic_update`` -- Page-style two-sided CUSUM around a fixed target mean:

      S+_i = max(0, S+_{i-1} + x_i - (mu0 + K))
      S-_i = min(0, S-_{i-1} + x_i - (mu0 - K))

  with an upward alarm once S+ > H and a downward alarm once S- < -H.

* ``update_with_score`` -- the generic form that accumulates an arbitrary
  per-sample score instead of the Gaussian deviation.

* ``adapted_update`` -- the region-mean variant used for boundary walking.
  Deviations accumulate against the running mean mu1 of the region being
  traversed, and the decision threshold is the gap |mu0 - mu1| to the mean
  of the neighbouring region, so no fixed K or H is needed.

States are plain mutable dataclasses. The update functions mutate the state
in place and return an :class:`Alarm` when the decision rule fires, else
``None``. Alarm indices are 1-based counts of samples consumed since the
last reset.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union


class Direction(str, Enum):
    """Which side of the two-sided detector fired."""

    UP = "upward"
    DOWN = "downward"


class Sidedness(str, Enum):
    """Which alarm sides of the classic detector are armed.

    Both cumulative sums are always maintained; sidedness only masks which
    side may raise an alarm.
    """

    UPPER = "upper"
    LOWER = "lower"
    TWO_SIDED = "two-sided"

    @property
    def upper_armed(self) -> bool:
        return self is not Sidedness.LOWER

    @property
    def lower_armed(self) -> bool:
        return self is not Sidedness.UPPER


@dataclass(frozen=True)
class Alarm:
    """A detected change-point: 1-based sample index and crossing direction."""

    index: int
    direction: Direction


@dataclass(frozen=True)
class ClassicConfig:
    """Parameters of the classic detector.

    mu0 is the in-control (target) mean, k the per-sample allowance and h
    the decision interval. For a shift of size delta in a process with
    standard deviation sigma the usual tuning is k = delta / 2, h = 5 sigma
    (see :meth:`from_shift`).
    """

    mu0: float
    k: float
    h: float
    sidedness: Sidedness = Sidedness.TWO_SIDED

    def __post_init__(self):
        if not math.isfinite(self.mu0):
            raise ValueError(f"mu0 must be finite, got {self.mu0!r}")
        if not (math.isfinite(self.k) and self.k >= 0.0):
            raise ValueError(f"k must be >= 0, got {self.k!r}")
        if not (math.isfinite(self.h) and self.h > 0.0):
            raise ValueError(f"h must be > 0, got {self.h!r}")

    @classmethod
    def from_shift(
        cls,
        mu0: float,
        delta: float,
        sigma: float,
        sidedness: Sidedness = Sidedness.TWO_SIDED,
    ) -> "ClassicConfig":
        """Derive k and h from the expected mean shift and process noise.

        k = |delta| / 2 and h = 5 sigma.
        """
        return cls(mu0=mu0, k=abs(delta) / 2.0, h=5.0 * sigma, sidedness=sidedness)


@dataclass
class ClassicState:
    """Running sums of the classic detector. s_plus >= 0 >= s_minus always."""

    s_plus: float = 0.0
    s_minus: float = 0.0
    n: int = 0


@dataclass
class AdaptedState:
    """Running state of the region-mean detector.

    mu0 is the mean of the previous (neighbouring) region and mu1 the
    running mean of the region currently being traversed, over mu1_count
    samples. With ``window`` set, mu1 is the mean of the most recent
    ``window`` samples instead of the full cumulative mean.
    """

    mu0: float
    mu1: float
    mu1_count: int = 1
    s_plus: float = 0.0
    s_minus: float = 0.0
    n: int = 0
    window: Optional[int] = None
    _recent: Optional[deque] = field(default=None, repr=False)

    def __post_init__(self):
        if self.mu1_count < 1:
            raise ValueError(f"mu1_count must be >= 1, got {self.mu1_count}")
        if self.window is not None:
            if self.window < 1:
                raise ValueError(f"window must be >= 1, got {self.window}")
            if self._recent is None:
                seed = [self.mu1] * min(self.mu1_count, self.window)
                self._recent = deque(seed, maxlen=self.window)
                self.mu1_count = len(self._recent)

    @classmethod
    def from_samples(
        cls,
        mu0: float,
        samples: Iterable[float],
        window: Optional[int] = None,
    ) -> "AdaptedState":
        """Bootstrap the current-region mean from observed samples."""
        xs = [float(v) for v in samples]
        if not xs:
            raise ValueError("at least one bootstrap sample is required")
        if window is not None:
            xs = xs[-window:]
        state = cls(
            mu0=float(mu0),
            mu1=sum(xs) / len(xs),
            mu1_count=len(xs),
            window=window,
        )
        if window is not None:
            state._recent = deque(xs, maxlen=window)
        return state

    def _fold(self, x: float) -> None:
        """Absorb a sample into the current-region mean."""
        if self.window is None:
            self.mu1 = (self.mu1 * self.mu1_count + x) / (self.mu1_count + 1)
            self.mu1_count += 1
        else:
            self._recent.append(x)
            self.mu1_count = len(self._recent)
            self.mu1 = sum(self._recent) / self.mu1_count


State = Union[ClassicState, AdaptedState]


def _check_finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return value


def classic_update(state: ClassicState, cfg: ClassicConfig, x: float) -> Optional[Alarm]:
    """Feed one sample to the classic detector. Mutates ``state``."""
    x = _check_finite(x, "sample")
    state.n += 1
    # Deviations are computed before adding to the sums so that the upper
    # side agrees bit for bit with update_with_score(x - (mu0 + k)).
    state.s_plus = max(0.0, state.s_plus + (x - (cfg.mu0 + cfg.k)))
    state.s_minus = min(0.0, state.s_minus + (x - (cfg.mu0 - cfg.k)))
    if cfg.sidedness.upper_armed and state.s_plus > cfg.h:
        return Alarm(state.n, Direction.UP)
    if cfg.sidedness.lower_armed and state.s_minus < -cfg.h:
        return Alarm(state.n, Direction.DOWN)
    return None


def update_with_score(state: ClassicState, score: float, h: float) -> Optional[Alarm]:
    """Feed one pre-computed score to the generic detector. Mutates ``state``.

    The upper side accumulates max(0, S+ + score) and alarms above h; the
    lower side is the mirror image with min and -h.
    """
    score = _check_finite(score, "score")
    if not (math.isfinite(h) and h > 0.0):
        raise ValueError(f"h must be > 0, got {h!r}")
    state.n += 1
    state.s_plus = max(0.0, state.s_plus + score)
    state.s_minus = min(0.0, state.s_minus + score)
    if state.s_plus > h:
        return Alarm(state.n, Direction.UP)
    if state.s_minus < -h:
        return Alarm(state.n, Direction.DOWN)
    return None


def adapted_update(state: AdaptedState, x: float) -> Optional[Alarm]:
    """Feed one sample to the region-mean detector. Mutates ``state``.

    The alarm test runs against the mu1 estimated from samples seen so far;
    the new sample is folded into mu1 only when no alarm fires, since an
    alarming sample belongs to the far side of the boundary.
    """
    x = _check_finite(x, "sample")
    if state.mu0 == state.mu1:
        raise ValueError(
            f"degenerate threshold: mu0 == mu1 == {state.mu0!r}; "
            "the decision gap |mu0 - mu1| would be zero"
        )
    state.n += 1
    state.s_plus = max(0.0, state.s_plus + x - state.mu1)
    state.s_minus = min(0.0, state.s_minus + x - state.mu1)
    gap = abs(state.mu0 - state.mu1)
    if state.s_plus > gap:
        return Alarm(state.n, Direction.UP)
    if state.s_minus < -gap:
        return Alarm(state.n, Direction.DOWN)
    state._fold(x)
    return None


def adapted_swap(state: AdaptedState, mu1_seed: float) -> None:
    """Hand the detector over to the region just entered. Mutates ``state``.

    The running mean of the region just left becomes the new mu0, and the
    current-region mean restarts from ``mu1_seed`` - normally the alarming
    sample, the first observation taken from the new region. That sample
    often sits partway across the boundary, which leaves the decision gap
    small right after a crossing; the next crossing then alarms on its
    first clearly-foreign sample instead of needing two. The seed bias
    washes out as new-region samples fold in (immediately under a sliding
    window), and any artifact alarm it causes fires in the direction of
    the region just left, which a boundary walk can recognize and discard.
    """
    state.mu0 = state.mu1
    state.mu1 = _check_finite(mu1_seed, "mu1_seed")
    state.mu1_count = 1
    state.s_plus = 0.0
    state.s_minus = 0.0
    state.n = 0
    if state.window is not None:
        state._recent = deque([state.mu1], maxlen=state.window)


def adapted_reanchor(state: AdaptedState, mu0: float, mu1: float) -> None:
    """Restart the detector on explicit region means. Mutates ``state``.

    Unlike :func:`adapted_swap` this does not reuse the running mean: both
    means are set outright and the charge cleared, as when a caller
    discovers the roles it handed over were wrong and puts the detector
    back on known levels.
    """
    state.mu0 = _check_finite(mu0, "mu0")
    state.mu1 = _check_finite(mu1, "mu1")
    state.mu1_count = 1
    state.s_plus = 0.0
    state.s_minus = 0.0
    state.n = 0
    if state.window is not None:
        state._recent = deque([state.mu1], maxlen=state.window)


def reset(state: State) -> State:
    """Zero the cumulative sums and the sample counter. Mutates ``state``.

    For :class:`AdaptedState` the current-region mean accumulator restarts
    from its present estimate; swapping region roles is the caller's job.
    Returns the same object for call-chaining convenience.
    """
    state.s_plus = 0.0
    state.s_minus = 0.0
    state.n = 0
    if isinstance(state, AdaptedState):
        state.mu1_count = 1
        if state.window is not None:
            state._recent = deque([state.mu1], maxlen=state.window)
    return state


def first_alarm(cfg: ClassicConfig, series: Iterable[float]) -> Optional[Alarm]:
    """Run the classic detector over a series, returning its first alarm.

    Returns ``None`` when the series ends without an alarm (an empty series
    included).
    """
    state = ClassicState()
    for x in series:
        alarm = classic_update(state, cfg, x)
        if alarm is not None:
            return alarm
    return None
