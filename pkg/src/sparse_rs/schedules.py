"""Decay schedules for the size of random-search updates.

Breakpoints are given for a reference budget of 10,000 queries and rescaled
linearly: a breakpoint ``j`` is reached at iteration ``i`` of a budget ``N``
once ``i * 10000 >= j * N``. The comparison is done in integers, which makes
every schedule invariant under ``(N, i) -> (c N, c i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

REFERENCE_BUDGET = 10_000
ALPHA_BREAKPOINTS = (0, 50, 200, 500, 1000, 2000, 4000, 6000, 8000)
ALPHA_DIVISORS = (2, 4, 5, 6, 8, 10, 12, 15, 20)
HALVING_BREAKPOINTS = (10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _passed(i: int, n_queries: int, breakpoints) -> int:
    """Number of rescaled breakpoints at or before iteration ``i``."""
    return sum(1 for j in breakpoints if i * REFERENCE_BUDGET >= j * n_queries)


def breakpoint_iteration(j: int, n_queries: int) -> int:
    """First iteration at which reference breakpoint ``j`` is active."""
    return -(-j * n_queries // REFERENCE_BUDGET)


@dataclass(frozen=True)
class PiecewiseAlphaSchedule:
    alpha_init: float
    n_queries: int
    constant: float | None = None

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValueError("n_queries must be positive")
        if self.alpha_init <= 0 and self.constant is None:
            raise ValueError("alpha_init must be positive")

    def __call__(self, i: int) -> float:
        return alpha_at(self, i)


def alpha_at(sched: PiecewiseAlphaSchedule, i: int) -> float:
    """Fraction of the ``k`` perturbed elements to resample at iteration ``i``."""
    if sched.constant is not None:
        return sched.constant
    seg = _passed(i, sched.n_queries, ALPHA_BREAKPOINTS) - 1
    return sched.alpha_init / ALPHA_DIVISORS[max(seg, 0)]


def swap_count(alpha: float, k: int) -> int:
    """``alpha * k`` rounded half-up, at least 1."""
    return max(1, round_half_up(alpha * k))


@dataclass(frozen=True)
class SquareSideSchedule:
    """Side of square updates inside an ``s x s`` patch: ``sqrt(alpha) * s``."""

    alpha_init: float
    patch_side: int
    n_queries: int

    def alpha(self, i: int) -> float:
        return self.alpha_init / 2 ** _passed(i, self.n_queries, HALVING_BREAKPOINTS)

    def side(self, i: int) -> int:
        s = round_half_up(math.sqrt(self.alpha(i)) * self.patch_side)
        return min(max(s, 1), self.patch_side)

    def first_unit_iteration(self) -> int | None:
        """First iteration whose side is 1, or None if it never is."""
        for i in [0] + [breakpoint_iteration(j, self.n_queries) for j in HALVING_BREAKPOINTS]:
            if i < self.n_queries and self.side(i) == 1:
                return i
        return None

    def refinement_start(self) -> int | None:
        """Start of single-channel updates: midway through the 1x1 phase."""
        i1 = self.first_unit_iteration()
        if i1 is None:
            return None
        return i1 + (self.n_queries - i1) // 2


def patch_square_side(sched: SquareSideSchedule, i: int) -> int:
    return sched.side(i)


@dataclass(frozen=True)
class LocationRadiusSchedule:
    image_side: int
    n_queries: int

    def radius(self, i: int) -> int:
        frac = max(0.0, 1.0 - i / self.n_queries)
        return round_half_up(0.75 * self.image_side * frac)


def location_radius(sched: LocationRadiusSchedule, i: int) -> int:
    return sched.radius(i)


@dataclass(frozen=True)
class FrameSquareSchedule:
    """Square sizes for frame updates.

    ``frame_rs``: ``3 * ceil(alpha * w^2 * (shrink_end - i/N))`` while
    ``i / N < shrink_end``, then 1. ``sa_in_frame``: ``ceil(alpha * w *
    (shrink_end - i/N))`` with the same cut-off, clamped to the frame width.
    Single-channel updates start at ``single_channel_from * N``.
    """

    alpha_init: float
    width: int
    n_queries: int
    variant: str = "frame_rs"
    shrink_end: float = 0.5
    single_channel_from: float = 0.25

    def __post_init__(self):
        if self.variant not in ("frame_rs", "sa_in_frame"):
            raise ValueError(f"unknown frame variant {self.variant!r}")

    def side(self, i: int) -> int:
        remaining = self.shrink_end - i / self.n_queries
        if remaining <= 0:
            return 1
        if self.variant == "frame_rs":
            return max(1, 3 * math.ceil(self.alpha_init * self.width ** 2 * remaining))
        return min(max(1, math.ceil(self.alpha_init * self.width * remaining)), self.width)

    def single_channel(self, i: int) -> bool:
        return i >= self.single_channel_from * self.n_queries


def frame_square_side(sched: FrameSquareSchedule, i: int) -> int:
    return sched.side(i)
