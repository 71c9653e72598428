"""Gradient-based competitors: PGD0 and JSMA-CE, white-box or with estimated gradients.

All attacks are generators in the style of :mod:`sparse_rs.engine`: black-box
modes yield input batches, white-box modes yield
:class:`~sparse_rs.engine.GradientRequest` objects. They return an
:class:`~sparse_rs.engine.AttackResult` whose trace follows the same
conventions as random search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import AttackResult, AttackTrace, GradientRequest, RngStream, run_generator
from .losses import AttackGoal, ce_grad, ce_losses
from .models.oracle import BudgetExhausted


# ---------------------------------------------------------------- GradEst

def grad_est_gen(x, loss_of_logits, m: int, eta: float, prior, rng: np.random.Generator):
    """Central finite differences along ``m`` Gaussian directions.

    Each probe yields the pair ``(x + eta s, x - eta s)`` (two queries) and
    adds ``(l1 - l2) / (2 eta) * s`` to the prior. Returns ``(g, exhausted)``;
    on exhaustion the probes completed so far are kept.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x) if prior is None else np.array(prior, dtype=np.float64)
    for _ in range(m):
        s = rng.standard_normal(x.shape)
        pair = np.stack([x + eta * s, x - eta * s]).astype(np.float32)
        try:
            logits = yield pair
        except BudgetExhausted:
            return g, True
        l1, l2 = loss_of_logits(logits)
        g += (l1 - l2) / (2 * eta) * s
    return g, False


def grad_est(loss_fn, x, m: int, eta: float, prior=None, rng=None):
    """Callable form of :func:`grad_est_gen` for a loss ``loss_fn(x) -> float``.

    Exactly ``2 m`` calls of ``loss_fn`` are made.
    """
    rng = np.random.default_rng() if rng is None else rng
    gen = grad_est_gen(x, lambda vals: vals, m, eta, prior, rng)
    try:
        pair = next(gen)
        while True:
            pair = gen.send(np.array([loss_fn(pair[0]), loss_fn(pair[1])]))
    except StopIteration as stop:
        return stop.value[0]


# ---------------------------------------------------------------- helpers

class _Tracker:
    """Best-loss bookkeeping shared by all baselines."""

    def __init__(self, goal: AttackGoal, x_orig):
        self.goal = goal
        self.trace = AttackTrace()
        self.used = 0
        self.x_best = np.array(x_orig, dtype=np.float32)
        self.best_loss = math.inf
        self.best_logits = None

    def spend(self, n: int):
        self.used += n

    def observe(self, x, logits) -> bool:
        """Record an evaluated point; returns True on success."""
        loss = self.goal.loss(logits)
        ok = self.goal.success(logits)
        if loss < self.best_loss or ok:
            self.x_best, self.best_logits = np.array(x, dtype=np.float32), logits
            if loss < self.best_loss:
                self.best_loss = loss
                self.trace.records.append((self.used, loss))
        if ok and self.trace.success_query is None:
            self.trace.success_query = self.used
            self.trace.success = True
        return ok

    def result(self) -> AttackResult:
        self.trace.queries_used = self.used
        self.trace.final_loss = (float(self.goal.loss(self.best_logits))
                                 if self.best_logits is not None else math.inf)
        return AttackResult(self.x_best, self.trace, None, self.best_logits)


def _goal_rows(goal: AttackGoal):
    def fn(logits):
        return goal.losses(logits)
    return fn


def _jsma_rows(goal: AttackGoal):
    """Objective that JSMA-CE ascends: CE of the true label, or minus CE of the target."""
    sign = -1.0 if goal.targeted else 1.0

    def rows(logits):
        z = np.asarray(logits, dtype=np.float64)
        return sign * ce_losses(z, np.full(len(z), goal.label))

    def with_grad(logits):
        z = np.asarray(logits, dtype=np.float64)
        labels = np.full(len(z), goal.label)
        return sign * ce_losses(z, labels), sign * ce_grad(z, labels)

    return rows, with_grad


def project_l0_pixels(x_orig, x, k: int) -> np.ndarray:
    """Clip to [0, 1] and keep the ``k`` pixels with the largest squared l2 change.

    Ties go to the lowest pixel index.
    """
    x_orig = np.asarray(x_orig, dtype=np.float64)
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    h, w, c = x.shape
    delta = (x - x_orig).reshape(h * w, c)
    mag = np.sum(delta * delta, axis=1)
    keep = np.argsort(-mag, kind="stable")[:k]
    out = np.zeros_like(delta)
    out[keep] = delta[keep]
    return (x_orig + out.reshape(h, w, c)).astype(np.float32)


def project_binary_add_only(x_orig, z, addable, k: int):
    """Top-``k`` addable features of the relaxed iterate ``z``.

    Returns ``(z_projected, x_binary)``: ``z`` is kept in [0, 1] on at most
    ``k`` addable coordinates, and the evaluated point switches on those with
    ``z >= 0.5``.
    """
    flat_o = np.asarray(x_orig, dtype=np.float64).ravel()
    zf = np.clip(np.asarray(z, dtype=np.float64).ravel(), 0.0, 1.0)
    vals = zf[addable]
    keep = addable[np.argsort(-vals, kind="stable")[:k]]
    zp = flat_o.copy()
    zp[keep] = zf[keep]
    xb = flat_o.copy()
    xb[keep[zf[keep] >= 0.5]] = 1.0
    shape = np.shape(x_orig)
    return zp.reshape(shape), xb.reshape(shape).astype(np.float32)


def _l1_step(g, size):
    norm = np.abs(g).sum()
    return g * (size / norm) if norm > 0 else np.zeros_like(g)


# ---------------------------------------------------------------- PGD0

@dataclass(frozen=True)
class PGD0Config:
    k: int
    n_queries: int
    mode: str = "ge"              # "ge" or "white"
    space: str = "pixel"          # "pixel" or "binary_add_only"
    step: float | None = None     # absolute l1 step size; None picks the default
    m_ge: int | None = None
    eta: float | None = None
    carry_prior: bool | None = None
    at_orig: bool | None = None   # estimate at x_orig instead of the iterate
    direction: str = "l1"         # "l1" (normalised gradient) or "sign"


def pgd0_defaults(cfg: PGD0Config, d: int, targeted: bool) -> dict:
    """Resolved step, probe count, probe size and prior handling."""
    binary = cfg.space == "binary_add_only"
    if cfg.mode == "white":
        step = (0.25 if targeted else 0.5) * d
        m, eta, carry, at_orig = 0, 0.0, False, False
    elif binary:
        step, m, eta, carry, at_orig = 4 * math.sqrt(d), 10, 100.0, True, True
    elif targeted:
        step, m, eta, carry, at_orig = 1.0 * d, 50, 0.01 / math.sqrt(d), True, False
    else:
        step, m, eta, carry, at_orig = 5.0 * d, 1, 0.01 / math.sqrt(d), False, False
    pick = lambda v, dflt: dflt if v is None else v  # noqa: E731
    return {"step": pick(cfg.step, step), "m": pick(cfg.m_ge, m), "eta": pick(cfg.eta, eta),
            "carry": pick(cfg.carry_prior, carry), "at_orig": pick(cfg.at_orig, at_orig)}


def pgd0_attack(x_orig, goal: AttackGoal, cfg: PGD0Config, seed: int, addable=None):
    """Generator: projected gradient descent on the goal loss under an l0 budget.

    Each GE iteration costs ``2 m`` probe queries plus one query for the new
    iterate; each white-box iteration costs one gradient query, which also
    reports the iterate's logits.
    """
    x_orig = np.asarray(x_orig, dtype=np.float32)
    d = x_orig.size
    p = pgd0_defaults(cfg, d, goal.targeted)
    binary = cfg.space == "binary_add_only"
    if binary:
        if addable is None:
            raise ValueError("binary_add_only needs the set of addable features")
        addable = np.asarray(addable, dtype=np.int64)
    rng = RngStream(seed).content
    tr = _Tracker(goal, x_orig)
    loss_rows = _goal_rows(goal)
    z = x_orig.astype(np.float64)       # relaxed iterate
    x_eval = x_orig.copy()              # point the model sees
    g = None

    def project(v):
        if binary:
            return project_binary_add_only(x_orig, v, addable, cfg.k)
        pv = project_l0_pixels(x_orig, v, cfg.k)
        return pv.astype(np.float64), pv

    def direction(grad):
        if cfg.direction == "sign":
            return np.sign(grad) * (p["step"] / grad.size)
        return _l1_step(grad, p["step"])

    if cfg.mode == "white":
        while tr.used < cfg.n_queries:
            try:
                logits, grad = yield GradientRequest(x_eval, goal.loss_and_grad)
            except BudgetExhausted:
                break
            tr.spend(1)
            if tr.observe(x_eval, logits):
                break
            if binary:
                grad = np.where(np.isin(np.arange(d), addable).reshape(grad.shape), grad, 0.0)
            z, x_eval = project(z - direction(grad))
        return tr.result()

    # initial point: the clean input, one query
    try:
        logits = (yield x_orig[None])[0]
    except BudgetExhausted:
        return tr.result()
    tr.spend(1)
    if tr.observe(x_orig, logits):
        return tr.result()
    while tr.used + 2 * p["m"] + 1 <= cfg.n_queries:
        base = x_orig if p["at_orig"] else x_eval
        prior = g if p["carry"] else None
        g, exhausted = yield from grad_est_gen(base, lambda lg: loss_rows(lg), p["m"],
                                               p["eta"], prior, rng)
        tr.spend(2 * p["m"])
        if exhausted:
            break
        grad = g
        if binary:
            mask = np.zeros(d, dtype=bool)
            mask[addable] = True
            grad = np.where(mask.reshape(g.shape), g, 0.0)
        z, x_eval = project(z - direction(grad))
        try:
            logits = (yield x_eval[None])[0]
        except BudgetExhausted:
            break
        tr.spend(1)
        if tr.observe(x_eval, logits):
            break
    return tr.result()


# ---------------------------------------------------------------- JSMA-CE

@dataclass(frozen=True)
class JSMAConfig:
    k: int
    n_queries: int
    mode: str = "ge"
    space: str = "pixel"
    m_ge: int | None = None
    eta: float | None = None
    count_checks: bool = True     # meter the candidate evaluations


def jsma_defaults(cfg: JSMAConfig) -> dict:
    binary = cfg.space == "binary_add_only"
    m = cfg.m_ge if cfg.m_ge is not None else 5
    eta = cfg.eta if cfg.eta is not None else (1.0 if binary else 0.01)
    return {"m": m, "eta": eta}


def jsma_candidate_pixels(x_orig, g, k: int) -> np.ndarray:
    """Top-``k`` pixels by l1 norm of ``g``; channels set by the sign of ``g``.

    A channel with zero gradient keeps its original value.
    """
    x = np.array(x_orig, dtype=np.float32)
    h, w, c = x.shape
    gf = np.asarray(g, dtype=np.float64).reshape(h * w, c)
    score = np.abs(gf).sum(axis=1)
    top = np.argsort(-score, kind="stable")[:k]
    flat = x.reshape(h * w, c)
    for pix in top:
        flat[pix] = np.where(gf[pix] > 0, 1.0, np.where(gf[pix] < 0, 0.0, flat[pix]))
    return x


def jsma_candidate_binary(x_orig, g, addable, k: int) -> np.ndarray:
    """Switch on the ``k`` addable features with the largest positive ``g``."""
    x = np.array(x_orig, dtype=np.float32)
    gf = np.asarray(g, dtype=np.float64).ravel()
    vals = gf[addable]
    order = np.argsort(-vals, kind="stable")[:k]
    chosen = addable[order][vals[order] > 0]
    x.reshape(-1)[chosen] = 1.0
    return x


def jsma_ce_attack(x_orig, goal: AttackGoal, cfg: JSMAConfig, seed: int, addable=None):
    """Generator: saliency-style attack on the cross-entropy gradient.

    GE mode estimates the gradient at ``x_orig`` with a carried prior; after
    each estimation round (``2 m`` queries) the top-``k`` candidate is built
    and checked. White-box mode perturbs one element per gradient query,
    greedily, until ``k`` elements are used.
    """
    x_orig = np.asarray(x_orig, dtype=np.float32)
    binary = cfg.space == "binary_add_only"
    if binary:
        if addable is None:
            raise ValueError("binary_add_only needs the set of addable features")
        addable = np.asarray(addable, dtype=np.int64)
    p = jsma_defaults(cfg)
    rows, with_grad = _jsma_rows(goal)
    tr = _Tracker(goal, x_orig)

    if cfg.mode == "white":
        return (yield from _jsma_white(x_orig, goal, cfg, addable, with_grad, tr))

    rng = RngStream(seed).content
    g = None
    check_cost = 1 if cfg.count_checks else 0
    while tr.used + 2 * p["m"] + check_cost <= cfg.n_queries:
        g, exhausted = yield from grad_est_gen(x_orig, rows, p["m"], p["eta"], g, rng)
        tr.spend(2 * p["m"])
        if exhausted:
            break
        if binary:
            cand = jsma_candidate_binary(x_orig, g, addable, cfg.k)
        else:
            cand = jsma_candidate_pixels(x_orig, g, cfg.k)
        try:
            logits = (yield cand[None])[0]
        except BudgetExhausted:
            break
        tr.spend(check_cost)
        if tr.observe(cand, logits):
            break
    return tr.result()


def _jsma_white(x_orig, goal, cfg, addable, with_grad, tr):
    x = x_orig.copy()
    binary = addable is not None
    h, w, c = x.shape
    n_el = h * w * c if binary else h * w
    used_el = np.zeros(n_el, dtype=bool)
    if binary:
        allowed = np.zeros(n_el, dtype=bool)
        allowed[addable] = True
    while tr.used < cfg.n_queries:
        try:
            logits, grad = yield GradientRequest(x, with_grad)
        except BudgetExhausted:
            break
        tr.spend(1)
        if tr.observe(x, logits) or used_el.sum() >= cfg.k:
            break
        if binary:
            gf = np.where(allowed & ~used_el, grad.ravel(), -np.inf)
            j = int(np.argmax(gf))
            if not gf[j] > 0:
                break
            x.reshape(-1)[j] = 1.0
        else:
            gf = np.asarray(grad, dtype=np.float64).reshape(n_el, c)
            score = np.where(used_el, -np.inf, np.abs(gf).sum(axis=1))
            j = int(np.argmax(score))
            flat = x.reshape(n_el, c)
            flat[j] = np.where(gf[j] > 0, 1.0, np.where(gf[j] < 0, 0.0, flat[j]))
        used_el[j] = True
    return tr.result()


# ---------------------------------------------------------------- conveniences

def run_pgd0(oracle, x_orig, goal, cfg: PGD0Config, seed: int = 0, addable=None) -> AttackResult:
    return run_generator(oracle, pgd0_attack(x_orig, goal, cfg, seed, addable))


def run_jsma_ce(oracle, x_orig, goal, cfg: JSMAConfig, seed: int = 0, addable=None) -> AttackResult:
    return run_generator(oracle, jsma_ce_attack(x_orig, goal, cfg, seed, addable))
