"""Targeted universal patches and frames.

One perturbation is optimised against a small batch of training images.
Every ``resample_period`` queries a fresh batch (and, for patches, fresh
locations) is drawn and the incumbent loss is re-evaluated on it, since
losses on different batches are not comparable. The budget counts forward
passes: one evaluation of the batch loss costs ``n`` queries, and the
per-round re-evaluation is charged against the same budget.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..engine import RngStream
from ..losses import ce_losses, predicted_class
from ..models.oracle import BudgetExhausted
from ..tensor_io import write_pnm
from .frame import FrameConfig, FrameContentSampler, FrameMask
from .patch import PatchContentSampler, squares_init

THREATS = ("patch", "frame")


@dataclass(frozen=True)
class UniversalConfig:
    target: int
    threat: str = "patch"
    size: int = 8                 # patch side s or frame width w
    n: int = 30
    n_queries: int = 10_000       # N_u, in forward passes
    resample_period: int = 1_000
    alpha_init: float | None = None
    init_square_count: int = 1000

    def __post_init__(self):
        if self.threat not in THREATS:
            raise ValueError(f"threat must be one of {THREATS}")
        if self.n < 1 or self.size < 1:
            raise ValueError("batch size and perturbation size must be positive")
        if self.resample_period < self.n:
            raise ValueError("resample_period must cover at least one batch evaluation")
        if self.n_queries % self.resample_period:
            raise ValueError("resample_period must divide n_queries")

    @property
    def alpha(self) -> float:
        if self.alpha_init is not None:
            return self.alpha_init
        return 0.05 if self.threat == "patch" else 2.0


@dataclass
class UniversalState:
    content: np.ndarray
    batch: np.ndarray                       # image indices
    locations: np.ndarray | None = None     # (n, 2) top-left corners, patches only
    round: int = 0


@dataclass
class UniversalTrace:
    records: list = field(default_factory=list)  # (queries, round, batch loss)
    queries_used: int = 0
    rounds: int = 0


def apply_patch(x, content, row: int, col: int) -> np.ndarray:
    s = content.shape[0]
    out = np.array(x, dtype=np.float32)
    out[row:row + s, col:col + s] = content
    return out


def apply_frame(x, content, mask: FrameMask) -> np.ndarray:
    out = np.array(x, dtype=np.float32)
    out.reshape(-1, out.shape[2])[mask.pixels] = content
    return out


def _eligible(labels, t: int) -> np.ndarray:
    # images that already belong to the target class carry no signal
    return np.flatnonzero(np.asarray(labels) != t)


class _Threat:
    def __init__(self, cfg: UniversalConfig, shape, n_iters: int):
        h, w, c = shape
        self.cfg, self.shape = cfg, tuple(shape)
        if cfg.threat == "patch":
            if cfg.size > min(h, w):
                raise ValueError(f"patch side {cfg.size} exceeds image size {h}x{w}")
            self.sampler = PatchContentSampler(cfg.size, cfg.alpha, n_iters)
            self.mask = None
        else:
            self.mask = FrameMask(h, w, c, cfg.size)
            fcfg = FrameConfig(cfg.size, cfg.alpha, shrink_end=0.25, single_channel_from=0.625)
            self.sampler = FrameContentSampler(self.mask, fcfg, n_iters)

    def init_content(self, rng) -> np.ndarray:
        c = self.shape[2]
        if self.mask is None:
            return squares_init(self.cfg.size, c, self.cfg.init_square_count, rng)
        return rng.integers(0, 2, size=(self.mask.count, c)).astype(np.float32)

    def locations(self, count: int, rng) -> np.ndarray | None:
        if self.mask is not None:
            return None
        h, w, _ = self.shape
        s = self.cfg.size
        return np.stack([rng.integers(0, h - s + 1, size=count),
                         rng.integers(0, w - s + 1, size=count)], axis=1)

    def compose(self, images, content, locations) -> np.ndarray:
        if self.mask is not None:
            return np.stack([apply_frame(x, content, self.mask) for x in images])
        return np.stack([apply_patch(x, content, r, q) for x, (r, q) in zip(images, locations)])


def universal_loss(oracle, content, images, locations, t: int, cfg: UniversalConfig) -> float:
    """Summed targeted cross-entropy of the composites; costs ``len(images)`` queries."""
    if len(images) == 0:
        raise ValueError("empty batch")
    threat = _Threat(cfg, images[0].shape, 1)
    logits = oracle.forward_batch(threat.compose(images, content, locations))
    return float(ce_losses(logits, np.full(len(logits), t)).sum())


def run_universal_gen(images, labels, cfg: UniversalConfig, seed: int):
    """Generator form: yields composite batches, receives their logits.

    Returns ``(content, trace)``.
    """
    images = np.asarray(images, dtype=np.float32)
    pool = _eligible(labels, cfg.target)
    if len(pool) == 0:
        raise ValueError(f"no training images outside target class {cfg.target}")
    n = cfg.n
    n_iters = cfg.n_queries // n
    threat = _Threat(cfg, images.shape[1:], n_iters)
    rng = RngStream(seed)
    content = threat.init_content(rng.init)
    trace = UniversalTrace()
    targets = np.full(n, cfg.target)
    used = 0

    def batch_loss(logits):
        return float(ce_losses(logits, targets).sum())

    for rnd in range(cfg.n_queries // cfg.resample_period):
        end = (rnd + 1) * cfg.resample_period
        batch = rng.location.choice(pool, size=n, replace=len(pool) < n)
        locs = threat.locations(n, rng.location)
        xs = images[batch]
        try:
            logits = yield threat.compose(xs, content, locs)
        except BudgetExhausted:
            break
        used += n
        best = batch_loss(logits)
        trace.rounds = rnd + 1
        trace.records.append((used, rnd, best))
        while used + n <= end:
            cand = threat.sampler.propose(content, used // n, rng.content)
            try:
                logits = yield threat.compose(xs, cand, locs)
            except BudgetExhausted:
                trace.queries_used = used
                return content, trace
            used += n
            loss = batch_loss(logits)
            if loss < best:
                content, best = cand, loss
                trace.records.append((used, rnd, best))
    trace.queries_used = used
    return content, trace


def run_universal(oracle, images, labels, cfg: UniversalConfig, seed: int):
    """Optimise a universal perturbation; returns ``(content, trace)``."""
    from ..engine import run_generator
    return run_generator(oracle, run_universal_gen(images, labels, cfg, seed))


def init_universal_content(cfg: UniversalConfig, shape, seed: int) -> np.ndarray:
    """The content ``run_universal`` starts from for the same seed (unoptimised)."""
    threat = _Threat(cfg, shape, max(cfg.n_queries // cfg.n, 1))
    return threat.init_content(RngStream(seed).init)


def eval_universal(oracle, content, images, labels, cfg: UniversalConfig,
                   locations_per_image: int = 100, seed: int = 0) -> float:
    """Fraction of (image, location) pairs classified as the target class.

    Images whose true label is the target are skipped. Frames have a single
    placement, so each image counts once.
    """
    images = np.asarray(images, dtype=np.float32)
    keep = _eligible(labels, cfg.target)
    if len(keep) == 0:
        return 0.0
    threat = _Threat(cfg, images.shape[1:], 1)
    rng = np.random.default_rng(seed)
    hits = total = 0
    for j in keep:
        reps = 1 if threat.mask is not None else locations_per_image
        locs = threat.locations(reps, rng)
        xs = threat.compose(np.repeat(images[j:j + 1], reps, axis=0), content, locs)
        logits = oracle.forward_batch(xs)
        hits += int(sum(predicted_class(z) == cfg.target for z in logits))
        total += reps
    return hits / total


def save_universal(path, content, cfg: UniversalConfig, seed: int, shape=None) -> None:
    """Write the content as a PPM/PGM image plus a JSON sidecar.

    Frame content is written embedded in a mid-grey image of ``shape``.
    """
    path = Path(path)
    if cfg.threat == "patch":
        img = content
    else:
        if shape is None:
            raise ValueError("frame content needs the image shape")
        img = apply_frame(np.full(shape, 0.5, dtype=np.float32), content,
                          FrameMask(shape[0], shape[1], shape[2], cfg.size))
    write_pnm(path, img)
    meta = {"threat": cfg.threat, "size": cfg.size, "target": cfg.target, "seed": seed,
            "config": asdict(cfg)}
    if shape is not None:
        meta["image_shape"] = list(shape)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_universal(path):
    """Inverse of :func:`save_universal`: ``(content, config, seed)``."""
    from ..tensor_io import read_pnm
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cfg = UniversalConfig(**meta["config"])
    img = np.asarray(read_pnm(path))
    if cfg.threat == "patch":
        content = img
    else:
        h, w, c = img.shape
        mask = FrameMask(h, w, c, cfg.size)
        content = img.reshape(-1, c)[mask.pixels]
    return content.astype(np.float32), cfg, meta["seed"]
