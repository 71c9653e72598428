"""Frame-RS: perturbations confined to a border band of fixed width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..schedules import FrameSquareSchedule


class FrameMask:
    def __init__(self, height: int, width: int, channels: int, frame_width: int):
        if frame_width < 1:
            raise ValueError("frame width must be positive")
        self.height, self.width, self.channels = height, width, channels
        self.frame_width = frame_width
        r = np.arange(height)[:, None]
        c = np.arange(width)[None, :]
        fw = frame_width
        self.mask = (r < fw) | (r >= height - fw) | (c < fw) | (c >= width - fw)
        self.pixels = np.flatnonzero(self.mask)  # row-major pixel indices
        # position of each image pixel inside the content array (-1 off-frame)
        self.slot = np.full(height * width, -1, dtype=np.int64)
        self.slot[self.pixels] = np.arange(len(self.pixels))
        self._fits = {}

    @property
    def count(self) -> int:
        return len(self.pixels)

    def inside_positions(self, side: int) -> np.ndarray:
        """Top-left pixels of the side x side squares lying entirely in the frame."""
        if side not in self._fits:
            m = self.mask.astype(np.int64)
            cs = np.pad(m.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
            h, w = self.height - side + 1, self.width - side + 1
            if h < 1 or w < 1:
                self._fits[side] = np.empty(0, dtype=np.int64)
            else:
                total = (cs[side:side + h, side:side + w] - cs[:h, side:side + w]
                         - cs[side:side + h, :w] + cs[:h, :w])
                rr, cc = np.nonzero(total == side * side)
                self._fits[side] = rr * self.width + cc
        return self._fits[side]


def frame_pixel_count(h: int, w: int, fw: int) -> int:
    return h * w - max(h - 2 * fw, 0) * max(w - 2 * fw, 0)


@dataclass(frozen=True)
class FrameConfig:
    width: int
    alpha_init: float = 2.0
    variant: str = "frame_rs"
    shrink_end: float = 0.5
    single_channel_from: float = 0.25


class FrameContentSampler:
    """Square updates anchored on frame pixels, as used by both variants."""

    def __init__(self, mask: FrameMask, cfg: FrameConfig, n_queries: int):
        self.mask = mask
        self.cfg = cfg
        self.schedule = FrameSquareSchedule(cfg.alpha_init, cfg.width, n_queries, cfg.variant,
                                            cfg.shrink_end, cfg.single_channel_from)

    def region(self, side: int, rng: np.random.Generator) -> np.ndarray:
        """Content slots covered by one sampled square."""
        m = self.mask
        if self.cfg.variant == "sa_in_frame":
            tops = m.inside_positions(side)
            top = int(tops[rng.integers(len(tops))])
            r0, c0 = divmod(top, m.width)
        else:
            anchor = int(m.pixels[rng.integers(m.count)])
            ar, ac = divmod(anchor, m.width)
            corner = int(rng.integers(4))  # which corner of the square the anchor is
            r0 = ar if corner in (0, 1) else ar - side + 1
            c0 = ac if corner in (0, 2) else ac - side + 1
        rows = np.arange(max(r0, 0), min(r0 + side, m.height))
        cols = np.arange(max(c0, 0), min(c0 + side, m.width))
        idx = (rows[:, None] * m.width + cols[None, :]).ravel()
        slots = m.slot[idx]
        return slots[slots >= 0]

    def propose(self, content: np.ndarray, i: int, rng: np.random.Generator,
                max_tries: int = 16) -> np.ndarray:
        out = content.copy()
        slots = self.region(self.schedule.side(i), rng)
        c = content.shape[1]
        if self.schedule.single_channel(i):
            ch = int(rng.integers(c))
            for _ in range(max_tries):
                v = float(rng.integers(2))
                if np.any(out[slots, ch] != v):
                    break
            out[slots, ch] = v
        else:
            for _ in range(max_tries):
                color = rng.integers(0, 2, size=c).astype(np.float32)
                if np.any(out[slots] != color):
                    break
            out[slots] = color
        return out


class FrameAdapter:
    def __init__(self, shape, cfg: FrameConfig, n_queries: int):
        h, w, c = shape
        self.shape = tuple(shape)
        self.cfg = cfg
        self.mask = FrameMask(h, w, c, cfg.width)
        self.sampler = FrameContentSampler(self.mask, cfg, n_queries)

    def init_state(self, rng) -> np.ndarray:
        return frame_init(self.mask, rng.init)

    def propose(self, content, i, rng):
        return self.sampler.propose(content, i, rng.content)

    def materialize(self, x_orig, content) -> np.ndarray:
        return frame_materialize(x_orig, content, self.mask)

    def feasible(self, x_orig, x) -> bool:
        return frame_support_ok(x_orig, x, self.mask)


def frame_init(mask: FrameMask, rng: np.random.Generator) -> np.ndarray:
    """Every frame scalar set to 0 or 1 with probability 1/2."""
    return rng.integers(0, 2, size=(mask.count, mask.channels)).astype(np.float32)


def frame_propose(adapter: FrameAdapter, content, i, rng):
    return adapter.propose(content, i, rng)


def frame_materialize(x_orig, content, mask: FrameMask) -> np.ndarray:
    x = np.array(x_orig, dtype=np.float32)
    flat = x.reshape(-1, x.shape[2])
    flat[mask.pixels] = content
    return x


def frame_support_ok(x_orig, x, mask: FrameMask) -> bool:
    x = np.asarray(x)
    if x.shape != np.shape(x_orig) or not np.all((x >= 0) & (x <= 1)):
        return False
    changed = np.any(x != x_orig, axis=2)
    return not np.any(changed & ~mask.mask)
