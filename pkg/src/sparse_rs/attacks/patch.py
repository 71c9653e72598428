"""Patch-RS: a square ``s x s`` patch whose location and content are searched.

Iterations alternate between location shifts and content updates according
to ``ratio = (location, content)``: within each cycle of ``location +
content`` iterations the content slots come first. The default ``(1, 4)``
moves the patch every fifth iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..schedules import LocationRadiusSchedule, SquareSideSchedule


@dataclass(frozen=True)
class PatchConfig:
    s: int
    alpha_init: float = 0.4
    ratio: tuple = (1, 4)
    init_square_count: int = 1000

    def __post_init__(self):
        a, b = self.ratio
        if a < 0 or b < 0 or a + b == 0:
            raise ValueError(f"invalid location:content ratio {self.ratio}")

    @classmethod
    def with_period(cls, s: int, period: int | None, **kw) -> "PatchConfig":
        """Location update every ``period`` iterations; None freezes the location."""
        ratio = (0, 1) if period is None else (1, period - 1)
        return cls(s, ratio=ratio, **kw)


@dataclass(frozen=True)
class PatchState:
    row: int
    col: int
    content: np.ndarray  # (s, s, c)


def default_patch_config(s: int, targeted: bool) -> PatchConfig:
    return PatchConfig(s, alpha_init=0.1, ratio=(1, 9)) if targeted else PatchConfig(s)


def squares_init(s: int, c: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Black patch overpainted with ``count`` random corner-colored squares."""
    content = np.zeros((s, s, c), dtype=np.float32)
    for _ in range(count):
        side = int(rng.integers(1, s + 1))
        r, q = rng.integers(0, s - side + 1, size=2)
        content[r:r + side, q:q + side] = rng.integers(0, 2, size=c)
    return content


def paint_square(content: np.ndarray, side: int, rng: np.random.Generator,
                 max_tries: int = 16) -> np.ndarray:
    """Paint a random square of ``side`` with a corner color that changes something."""
    s, _, c = content.shape
    out = content.copy()
    r, q = rng.integers(0, s - side + 1, size=2)
    window = out[r:r + side, q:q + side]
    for _ in range(max_tries):
        color = rng.integers(0, 2, size=c).astype(np.float32)
        if np.any(window != color):
            break
    window[...] = color
    return out


def flip_one(content: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Single-channel update: one scalar set to the opposite corner value."""
    s, _, c = content.shape
    out = content.copy()
    r, q = rng.integers(0, s, size=2)
    ch = int(rng.integers(0, c))
    out[r, q, ch] = 1.0 - round(float(out[r, q, ch]))
    return out


class PatchContentSampler:
    """Square-shaped content updates with a final single-channel phase."""

    def __init__(self, s: int, alpha_init: float, n_queries: int, single_channel: bool = True):
        self.schedule = SquareSideSchedule(alpha_init, s, n_queries)
        self.refine_from = self.schedule.refinement_start() if single_channel else None

    def refining(self, i: int) -> bool:
        return self.refine_from is not None and i >= self.refine_from

    def propose(self, content, i, rng):
        if self.refining(i):
            return flip_one(content, rng)
        return paint_square(content, self.schedule.side(i), rng)


class PatchAdapter:
    def __init__(self, shape, cfg: PatchConfig, n_queries: int):
        h, w, c = shape
        if cfg.s > min(h, w):
            raise ValueError(f"patch side {cfg.s} exceeds image size {h}x{w}")
        self.shape = tuple(shape)
        self.cfg = cfg
        self.sampler = PatchContentSampler(cfg.s, cfg.alpha_init, n_queries)
        self.radius = LocationRadiusSchedule(max(h, w), n_queries)

    def is_location_step(self, i: int) -> bool:
        a, b = self.cfg.ratio
        if a == 0:
            return False
        return i % (a + b) >= b

    def init_state(self, rng) -> PatchState:
        h, w, c = self.shape
        s = self.cfg.s
        content = squares_init(s, c, self.cfg.init_square_count, rng.init)
        row = int(rng.init.integers(0, h - s + 1))
        col = int(rng.init.integers(0, w - s + 1))
        return PatchState(row, col, content)

    def propose(self, state: PatchState, i: int, rng) -> PatchState:
        if self.is_location_step(i):
            h, w, _ = self.shape
            s = self.cfg.s
            r = self.radius.radius(i)
            dr, dc = rng.location.integers(-r, r + 1, size=2)
            row = int(np.clip(state.row + dr, 0, h - s))
            col = int(np.clip(state.col + dc, 0, w - s))
            return PatchState(row, col, state.content)
        return PatchState(state.row, state.col, self.sampler.propose(state.content, i, rng.content))

    def materialize(self, x_orig, state: PatchState) -> np.ndarray:
        s = self.cfg.s
        x = np.array(x_orig, dtype=np.float32)
        x[state.row:state.row + s, state.col:state.col + s] = state.content
        return x

    def feasible(self, x_orig, x) -> bool:
        return patch_support_ok(x_orig, x, self.cfg.s)


def patch_support_ok(x_orig, x, s: int) -> bool:
    """True if ``x`` differs from ``x_orig`` only inside one in-bounds s x s window."""
    x = np.asarray(x)
    if x.shape != np.shape(x_orig) or not np.all((x >= 0) & (x <= 1)):
        return False
    rows, cols = np.nonzero(np.any(x != x_orig, axis=2))
    if len(rows) == 0:
        return True
    return rows.max() - rows.min() < s and cols.max() - cols.min() < s


def patch_init(adapter: PatchAdapter, rng) -> PatchState:
    return adapter.init_state(rng)


def patch_propose(adapter: PatchAdapter, state: PatchState, i: int, rng) -> PatchState:
    return adapter.propose(state, i, rng)


def patch_materialize(adapter: PatchAdapter, x_orig, state: PatchState) -> np.ndarray:
    return adapter.materialize(x_orig, state)
