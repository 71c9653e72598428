"""Experiment driver: attack a set of images under several seeds and summarise.

Conventions:

* An image is *initially correct* if the clean input is classified as its
  label. Only those are attacked; the others count as broken (they enter the
  robust error) but not the success rate, and are recorded with 0 queries.
* Query statistics are taken over every attacked image, failures included
  at the budget they used.
* Each image's randomness is derived from ``(seed, image id)`` and the model
  output of a row does not depend on the batch it is evaluated in, so the
  results do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
import multiprocessing as mp

import numpy as np

from .attacks.frame import FrameAdapter, FrameConfig
from .attacks.l0 import L0Adapter, L0Config, default_alpha
from .attacks.patch import PatchConfig, PatchAdapter
from .baselines import JSMAConfig, PGD0Config, jsma_ce_attack, pgd0_attack
from .engine import AttackTrace, derive_seed, drive, restarts_search
from .losses import AttackGoal, predicted_class
from .models.oracle import ModelOracle

WORKERS_ENV = "SPARSE_RS_WORKERS"
ATTACKS = ("l0", "patch", "frame", "universal", "pgd0_ge", "jsma_ce_ge",
           "pgd0_white", "jsma_ce_white")
GOALS = ("untargeted", "targeted")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_ratio(v: str) -> tuple:
    a, sep, b = v.partition(":")
    if not sep:
        raise ValueError(f"ratio must look like location:content, got {v!r}")
    return (int(a), int(b))


def _parse_seeds(v: str) -> tuple:
    v = v.strip()
    if "-" in v and "," not in v:
        lo, hi = v.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in v.split(",") if s.strip())


def _opt(conv):
    def parse(v):
        return None if v.strip().lower() in ("", "none", "default") else conv(v)
    return parse


@dataclass(frozen=True)
class ExperimentConfig:
    attack: str = "l0"
    goal: str = "untargeted"
    model: str | None = None
    dataset: str = "synth"
    synth_seed: int = 0
    synth_n: int = 2400
    synth_shape: tuple = (32, 32, 3)
    synth_noise: float = 0.25
    synth_contrast: float = 0.2
    classes: int = 10
    train_n: int | None = None      # images before this index form the training split
    n_images: int = 200
    target: int = -1                # targeted goal; -1 draws a random other class per image
    k: int = 10
    s: int = 8
    w: int = 2
    n_queries: int | None = None
    alpha_init: float | None = None
    constant_alpha: float | None = None
    seeds: tuple = (0,)
    restarts: int = 1
    space: str = "pixel"
    ratio: tuple | None = None      # patch location:content
    frame_variant: str = "frame_rs"
    count_checks: bool = True
    early_stop: bool = True
    threat: str = "patch"           # universal: patch (side s) or frame (width w)
    batch_size: int = 30
    resample_period: int | None = None
    locations_per_image: int = 100
    workers: int | None = None

    @property
    def budget(self) -> int:
        if self.n_queries is not None:
            return self.n_queries
        return 10_000 if self.attack == "universal" else 1_000

    @property
    def universal_period(self) -> int:
        return self.resample_period if self.resample_period is not None else self.budget // 10

    @property
    def train_count(self) -> int:
        if self.train_n is not None:
            return self.train_n
        return 2000 if self.dataset == "synth" else 0

    def validate(self) -> "ExperimentConfig":
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}; choose from {', '.join(ATTACKS)}")
        if self.goal not in GOALS:
            raise ConfigError(f"goal must be one of {GOALS}")
        if self.budget < 1:
            raise ConfigError("n_queries must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        for name in ("k", "s", "w", "n_images", "batch_size", "locations_per_image"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.space not in ("pixel", "feature", "binary_add_only"):
            raise ConfigError(f"unknown space {self.space!r}")
        if self.frame_variant not in ("frame_rs", "sa_in_frame"):
            raise ConfigError(f"unknown frame variant {self.frame_variant!r}")
        if self.attack == "universal":
            if self.goal != "targeted" or self.target < 0:
                raise ConfigError("universal attacks need goal=targeted and a target class")
            if self.threat not in ("patch", "frame"):
                raise ConfigError(f"unknown threat {self.threat!r}")
            if self.budget % self.universal_period:
                raise ConfigError("resample_period must divide n_queries")
        if self.ratio is not None:
            a, b = self.ratio
            if a < 0 or b < 0 or a + b == 0:
                raise ConfigError(f"invalid ratio {self.ratio}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        return self


_PARSERS = {
    "attack": str, "goal": str, "model": _opt(str), "dataset": str,
    "synth_seed": int, "synth_n": int, "synth_noise": float, "synth_contrast": float,
    "synth_shape": lambda v: tuple(int(x) for x in v.replace("x", ",").split(",")),
    "classes": int, "train_n": _opt(int), "n_images": int, "target": int,
    "k": int, "s": int, "w": int, "n_queries": _opt(int), "alpha_init": _opt(float),
    "constant_alpha": _opt(float), "seeds": _parse_seeds, "restarts": int, "space": str,
    "ratio": _opt(_parse_ratio), "frame_variant": str, "count_checks": _parse_bool,
    "early_stop": _parse_bool, "threat": str, "batch_size": int, "resample_period": _opt(int),
    "locations_per_image": int, "workers": _opt(int),
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_pairs(lines, source: str = "<config>") -> dict:
    """``key=value`` lines (``#`` comments, blank lines allowed) to typed values."""
    values = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](val.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{n}: bad value for {key}: {exc}") from None
    return values


def load_config(path=None, overrides=()) -> ExperimentConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_pairs(fh, str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    values.update(parse_pairs(overrides, "<command line>"))
    return ExperimentConfig(**values).validate()


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            text = "none"
        elif f.name == "ratio":
            text = f"{v[0]}:{v[1]}"
        elif isinstance(v, tuple):
            text = ",".join(str(x) for x in v)
        else:
            text = str(v).lower() if isinstance(v, bool) else str(v)
        out.append(f"{f.name}={text}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- attack factory

def image_goal(cfg: ExperimentConfig, label: int, image_id: int, seed: int,
               num_classes: int) -> AttackGoal:
    if cfg.goal == "untargeted":
        return AttackGoal.untargeted(label)
    if cfg.target >= 0:
        return AttackGoal.target(cfg.target)
    rng = np.random.default_rng(derive_seed(seed, "target", image_id))
    others = [c for c in range(num_classes) if c != label]
    return AttackGoal.target(int(rng.choice(others)))


def make_attack(cfg: ExperimentConfig, x, goal: AttackGoal, seed: int):
    """Generator for one image; the oracle limit it needs is ``attack_limit(cfg)``."""
    shape = np.shape(x)
    n = cfg.budget
    addable = np.flatnonzero(np.asarray(x).ravel() == 0) if cfg.space == "binary_add_only" else None
    if cfg.attack == "l0":
        alpha = cfg.alpha_init if cfg.alpha_init is not None else default_alpha(cfg.space, goal.targeted)
        l0 = L0Config(cfg.k, cfg.space, alpha, cfg.constant_alpha)
        return restarts_search(x, goal, lambda: L0Adapter(shape, l0, n, addable), n, seed,
                               cfg.restarts, cfg.early_stop)
    if cfg.attack == "patch":
        pc = PatchConfig(cfg.s, **({"alpha_init": 0.1, "ratio": (1, 9)} if goal.targeted else {}))
        if cfg.alpha_init is not None:
            pc = replace(pc, alpha_init=cfg.alpha_init)
        if cfg.ratio is not None:
            pc = replace(pc, ratio=cfg.ratio)
        return restarts_search(x, goal, lambda: PatchAdapter(shape, pc, n), n, seed,
                               cfg.restarts, cfg.early_stop)
    if cfg.attack == "frame":
        fc = FrameConfig(cfg.w, 2.0 if cfg.alpha_init is None else cfg.alpha_init, cfg.frame_variant)
        return restarts_search(x, goal, lambda: FrameAdapter(shape, fc, n), n, seed,
                               cfg.restarts, cfg.early_stop)
    if cfg.attack in ("pgd0_ge", "pgd0_white"):
        mode = "ge" if cfg.attack == "pgd0_ge" else "white"
        space = "binary_add_only" if cfg.space == "binary_add_only" else "pixel"
        return pgd0_attack(x, goal, PGD0Config(cfg.k, n, mode, space), seed, addable)
    if cfg.attack in ("jsma_ce_ge", "jsma_ce_white"):
        mode = "ge" if cfg.attack == "jsma_ce_ge" else "white"
        space = "binary_add_only" if cfg.space == "binary_add_only" else "pixel"
        return jsma_ce_attack(x, goal, JSMAConfig(cfg.k, n, mode, space,
                                                  count_checks=cfg.count_checks), seed, addable)
    raise ConfigError(f"attack {cfg.attack!r} is not an image-specific attack")


def attack_limit(cfg: ExperimentConfig) -> int:
    if cfg.attack in ("l0", "patch", "frame"):
        return cfg.budget * cfg.restarts
    if cfg.attack == "jsma_ce_ge" and not cfg.count_checks:
        return None  # uncounted checks exceed the nominal budget
    return cfg.budget


# ---------------------------------------------------------------- reports

@dataclass
class ImageRow:
    image_id: int
    seed: int
    label: int
    target: int
    initially_correct: bool
    success: bool
    queries_used: int
    success_query: int | None
    final_loss: float
    oracle_queries: int = 0
    trace: AttackTrace | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SeedSummary:
    seed: int
    n_points: int
    n_correct: int
    success_rate: float | None
    robust_error: float
    mean_queries: float | None
    median_queries: float | None


def summarize(rows, seed: int) -> SeedSummary:
    attacked = [r for r in rows if r.initially_correct]
    broken = sum(1 for r in rows if (not r.initially_correct) or r.success)
    q = [r.queries_used for r in attacked]
    return SeedSummary(
        seed, len(rows), len(attacked),
        sum(r.success for r in attacked) / len(attacked) if attacked else None,
        broken / len(rows) if rows else 0.0,
        statistics.fmean(q) if q else None,
        statistics.median(q) if q else None)


@dataclass
class SuiteReport:
    config: ExperimentConfig
    rows: list                      # ImageRow, ordered by (seed, image id)
    summaries: list                 # SeedSummary per seed

    def rows_for(self, seed: int) -> list:
        return [r for r in self.rows if r.seed == seed]

    def success_rates(self) -> list:
        return [s.success_rate for s in self.summaries if s.success_rate is not None]

    @property
    def success_rate_mean(self):
        rates = self.success_rates()
        return statistics.fmean(rates) if rates else None

    @property
    def success_rate_std(self):
        rates = self.success_rates()
        return statistics.pstdev(rates) if rates else None

    def self_check(self) -> bool:
        """Aggregates are recomputable from the rows."""
        return all(summarize(self.rows_for(s.seed), s.seed) == s for s in self.summaries)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["seed", "image_id", "label", "target", "initially_correct", "success",
                     "queries_used", "success_query", "final_loss"])
        for r in self.rows:
            wr.writerow([r.seed, r.image_id, r.label, r.target, int(r.initially_correct),
                         int(r.success), r.queries_used,
                         -1 if r.success_query is None else r.success_query, repr(r.final_loss)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["seed", "n_points", "n_correct", "success_rate", "robust_error",
                     "mean_queries", "median_queries"])
        fmt = lambda v: "n/a" if v is None else f"{v:.6g}"  # noqa: E731
        for s in self.summaries:
            wr.writerow([s.seed, s.n_points, s.n_correct, fmt(s.success_rate),
                         fmt(s.robust_error), fmt(s.mean_queries), fmt(s.median_queries)])
        if len(self.summaries) > 1:
            wr.writerow(["mean", "", "", fmt(self.success_rate_mean), "", "", ""])
            wr.writerow(["std", "", "", fmt(self.success_rate_std), "", "", ""])
        return buf.getvalue()


def read_rows_csv(text: str) -> list:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        sq = int(rec["success_query"])
        out.append(ImageRow(int(rec["image_id"]), int(rec["seed"]), int(rec["label"]),
                            int(rec["target"]), rec["initially_correct"] == "1",
                            rec["success"] == "1", int(rec["queries_used"]),
                            None if sq < 0 else sq, float(rec["final_loss"])))
    return out


# ---------------------------------------------------------------- execution

def _attack_chunk(args):
    cfg, model, images, labels, ids, seed = args
    num_classes = model.num_classes
    rows = {}
    tasks, meta = [], []
    for x, y, image_id in zip(images, labels, ids):
        y = int(y)
        goal = image_goal(cfg, y, image_id, seed, num_classes)
        screen = ModelOracle(model)
        correct = predicted_class(screen.forward(x)) == y
        target = goal.label if goal.targeted else -1
        if not correct:
            rows[image_id] = ImageRow(image_id, seed, y, target, False, True, 0, None, math.nan)
            continue
        oracle = ModelOracle(model, attack_limit(cfg))
        img_seed = derive_seed(seed, "image", image_id)
        tasks.append((oracle, make_attack(cfg, x, goal, img_seed)))
        meta.append((image_id, y, target, oracle))
    for (image_id, y, target, oracle), res in zip(meta, drive(tasks)):
        t = res.trace
        rows[image_id] = ImageRow(image_id, seed, y, target, True, t.success, t.queries_used,
                                  t.success_query, t.final_loss, oracle.queries, t)
    return [rows[i] for i in ids]


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be positive")
        return n
    return 1


def attack_images(cfg: ExperimentConfig, model, images, labels, ids, seed: int,
                  workers: int = 1) -> list:
    """Rows for the given images under one seed, ordered as ``ids``."""
    ids = [int(i) for i in ids]
    if workers <= 1 or len(ids) < 2:
        return _attack_chunk((cfg, model, images, labels, ids, seed))
    chunks = np.array_split(np.arange(len(ids)), min(workers, len(ids)))
    jobs = [(cfg, model, images[c], labels[c], [ids[j] for j in c], seed) for c in chunks if len(c)]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=len(jobs), mp_context=ctx) as pool:
        parts = list(pool.map(_attack_chunk, jobs))
    return [row for part in parts for row in part]


def run_suite(cfg: ExperimentConfig, model, images, labels, ids=None,
              workers: int | None = None) -> SuiteReport:
    """Attack ``images`` under every seed of ``cfg``."""
    cfg.validate()
    if cfg.attack == "universal":
        raise ConfigError("universal perturbations are run with run_universal / the universal command")
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if images.shape[1:] != tuple(model.input_shape):
        raise ConfigError(f"images of shape {images.shape[1:]} do not fit a model "
                          f"expecting {tuple(model.input_shape)}")
    if ids is None:
        ids = np.arange(len(images))
    if workers is None:
        workers = cfg.workers if cfg.workers is not None else default_workers()
    rows, summaries = [], []
    for seed in cfg.seeds:
        seed_rows = attack_images(cfg, model, images, labels, ids, seed, workers)
        rows.extend(seed_rows)
        summaries.append(summarize(seed_rows, seed))
    return SuiteReport(cfg, rows, summaries)


# ---------------------------------------------------------------- curves and ablations

def success_curve(rows, grid) -> list:
    """``(q, rate)`` with rate = share of attacked images successful within ``q`` queries."""
    attacked = [r for r in rows if r.initially_correct]
    hits = sorted(r.success_query for r in attacked if r.success and r.success_query is not None)
    out = []
    for q in grid:
        n = int(np.searchsorted(hits, q, side="right"))
        out.append((int(q), n / len(attacked) if attacked else 0.0))
    return out


def default_grid(n_queries: int, points: int = 50) -> list:
    return sorted({int(round(v)) for v in np.linspace(0, n_queries, points + 1)})


def curve_csv(curve) -> str:
    return "queries,success_rate\n" + "".join(f"{q},{r!r}\n" for q, r in curve)


SWEEPS = ("alpha_init", "constant_alpha", "ratio")


def ablation(cfg: ExperimentConfig, sweep: str, values, model, images, labels, ids=None,
             workers: int | None = None) -> list:
    """One :class:`SuiteReport` per sweep value."""
    if sweep not in SWEEPS:
        raise ConfigError(f"sweep must be one of {SWEEPS}")
    reports = []
    for v in values:
        if sweep == "ratio":
            v = _parse_ratio(v) if isinstance(v, str) else tuple(v)
        point = replace(cfg, **{sweep: v}).validate()
        reports.append((v, run_suite(point, model, images, labels, ids, workers)))
    return reports


def ablation_csv(sweep: str, reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["sweep", "value", "success_rate_mean", "success_rate_std", "mean_queries",
                 "median_queries"])
    fmt = lambda v: "n/a" if v is None else f"{v:.6g}"  # noqa: E731
    for v, rep in reports:
        value = f"{v[0]}:{v[1]}" if isinstance(v, tuple) else v
        mq = [s.mean_queries for s in rep.summaries if s.mean_queries is not None]
        md = [s.median_queries for s in rep.summaries if s.median_queries is not None]
        wr.writerow([sweep, value, fmt(rep.success_rate_mean), fmt(rep.success_rate_std),
                     fmt(statistics.fmean(mq) if mq else None),
                     fmt(statistics.fmean(md) if md else None)])
    return buf.getvalue()


# ---------------------------------------------------------------- data and model

def load_data(cfg: ExperimentConfig):
    """``(dataset, train_ids, test_ids)`` for a config."""
    from .tensor_io import DatasetError, load_dataset, synth_dataset
    if cfg.dataset == "synth":
        h, w, c = cfg.synth_shape
        try:
            ds = synth_dataset(cfg.synth_seed, cfg.synth_n, h, w, c, cfg.classes,
                               noise=cfg.synth_noise, contrast=cfg.synth_contrast)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        try:
            ds = load_dataset(cfg.dataset)
        except (DatasetError, OSError) as exc:
            raise ConfigError(str(exc)) from None
    n_train = cfg.train_count
    if n_train > len(ds):
        raise ConfigError(f"train_n={n_train} exceeds the {len(ds)} available images")
    train_ids = np.arange(n_train)
    test_ids = np.arange(n_train, min(len(ds), n_train + cfg.n_images))
    return ds, train_ids, test_ids


def train_default_model(ds, train_ids, seed: int = 0, epochs: int = 10):
    from .models.train import default_arch, train_toy
    sub = ds.subset(train_ids)
    return train_toy(sub, default_arch(ds.image_shape, ds.class_count), seed=seed, epochs=epochs)


def load_model(cfg: ExperimentConfig, ds=None, train_ids=None):
    """Weights from ``cfg.model``; without a path, a toy net trained on the training split."""
    from .models.weights import WeightFileError, load_weights
    if cfg.model is not None:
        try:
            return load_weights(cfg.model)
        except (WeightFileError, OSError) as exc:
            raise ConfigError(f"cannot load model {cfg.model}: {exc}") from None
    if ds is None or train_ids is None or len(train_ids) == 0:
        raise ConfigError("no model given and no training split to train one on")
    return train_default_model(ds, train_ids)[0]


def universal_config(cfg: ExperimentConfig):
    from .attacks.universal import UniversalConfig
    try:
        return UniversalConfig(target=cfg.target, threat=cfg.threat,
                               size=cfg.s if cfg.threat == "patch" else cfg.w,
                               n=cfg.batch_size, n_queries=cfg.budget,
                               resample_period=cfg.universal_period, alpha_init=cfg.alpha_init)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
