"""The random-search loop and the driver that evaluates attacks in lockstep.

An attack is written as a generator: it yields a batch of inputs it wants
evaluated and receives their logits back. :func:`drive` runs many such
generators side by side, stacking their pending inputs into one forward
pass per step. Because each attack owns its oracle and random streams, its
trajectory does not depend on what else is in the batch.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .losses import AttackGoal
from .models.oracle import BudgetExhausted, query_many


def derive_seed(seed: int, *labels) -> int:
    """A 64-bit seed derived from ``seed`` and a path of labels."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        words.append(zlib.crc32(label.encode()) if isinstance(label, str) else int(label))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


class RngStream:
    """Independent generators for initialisation, location and content draws."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.init = np.random.default_rng(derive_seed(seed, "init"))
        self.location = np.random.default_rng(derive_seed(seed, "location"))
        self.content = np.random.default_rng(derive_seed(seed, "content"))

    def child(self, *labels) -> "RngStream":
        return RngStream(derive_seed(self.seed, *labels))


@dataclass
class AttackTrace:
    records: list = field(default_factory=list)  # (query_index, best_loss)
    queries_used: int = 0
    success: bool = False
    success_query: int | None = None
    final_loss: float = float("inf")

    def to_csv(self) -> str:
        lines = ["query_index,best_loss"]
        lines += [f"{q},{loss!r}" for q, loss in self.records]
        sq = -1 if self.success_query is None else self.success_query
        lines.append(f"summary,queries_used={self.queries_used};success={int(self.success)};"
                     f"success_query={sq}")
        return "\n".join(lines) + "\n"


@dataclass
class AttackResult:
    x_adv: np.ndarray
    trace: AttackTrace
    state: object = None
    logits: np.ndarray = None


class InfeasibleCandidate(AssertionError):
    """An adapter produced a point outside its threat model (a bug)."""


@dataclass
class GradientRequest:
    """Yielded by white-box attacks: loss gradient wrt ``x`` (one query).

    ``dloss_fn(logits) -> (losses, dlosses/dlogits)`` on a batch of logits.
    The generator receives ``(logits, grad)`` back, with float32 logits.
    """

    x: np.ndarray
    dloss_fn: object


def _serve_gradient(oracle, req: GradientRequest):
    seen = {}

    def fn(logits):
        seen["logits"] = np.asarray(logits, dtype=np.float32)
        return req.dloss_fn(logits)

    try:
        _, grad = oracle.gradient(req.x, fn)
    except BudgetExhausted as exc:
        return exc
    return seen["logits"][0], np.asarray(grad)


def drive(tasks):
    """Run ``(oracle, generator)`` pairs to completion; return their values."""
    results = [None] * len(tasks)
    pending = {}
    for j, (_, gen) in enumerate(tasks):
        try:
            pending[j] = next(gen)
        except StopIteration as stop:
            results[j] = stop.value
    while pending:
        idx = list(pending)
        outs = [None] * len(idx)
        batch_pos = [n for n, j in enumerate(idx) if not isinstance(pending[j], GradientRequest)]
        for n, j in enumerate(idx):
            if isinstance(pending[j], GradientRequest):
                outs[n] = _serve_gradient(tasks[j][0], pending[j])
        batched = query_many([tasks[idx[n]][0] for n in batch_pos],
                             [pending[idx[n]] for n in batch_pos])
        for n, out in zip(batch_pos, batched):
            outs[n] = out
        for j, out in zip(idx, outs):
            gen = tasks[j][1]
            try:
                if isinstance(out, BudgetExhausted):
                    pending[j] = gen.throw(out)
                else:
                    pending[j] = gen.send(out)
            except StopIteration as stop:
                results[j] = stop.value
                del pending[j]
    return results


def run_generator(oracle, gen):
    return drive([(oracle, gen)])[0]


def random_search(x_orig, goal: AttackGoal, adapter, n_queries: int, rng: RngStream,
                  early_stop: bool = True, validate: bool = True):
    """Generator form of the random-search loop.

    The initial candidate costs one query and counts against ``n_queries``;
    iteration ``i`` is the number of queries spent before the proposal.
    A candidate is accepted only on strict loss improvement. Every queried
    candidate is checked for success; with ``early_stop`` the first
    successful one ends the run and is returned.
    """
    if n_queries < 1:
        raise ValueError("n_queries must be at least 1")
    x_orig = np.asarray(x_orig, dtype=np.float32)
    trace = AttackTrace()

    def check(x):
        if validate and not adapter.feasible(x_orig, x):
            raise InfeasibleCandidate(f"{type(adapter).__name__} produced an infeasible point")

    state = adapter.init_state(rng)
    x_best = adapter.materialize(x_orig, state)
    check(x_best)
    try:
        logits = (yield x_best[None])[0]
    except BudgetExhausted:
        return AttackResult(x_best, trace, state)
    used = 1
    best_loss = goal.loss(logits)
    best_logits = logits
    trace.records.append((used, best_loss))
    success = goal.success(logits)
    if success:
        trace.success_query = used

    while used < n_queries and not (success and early_stop):
        cand = adapter.propose(state, used, rng)
        x_cand = adapter.materialize(x_orig, cand)
        check(x_cand)
        try:
            logits = (yield x_cand[None])[0]
        except BudgetExhausted:
            break
        used += 1
        loss = goal.loss(logits)
        cand_success = goal.success(logits)
        if loss < best_loss:
            state, x_best, best_loss, best_logits = cand, x_cand, loss, logits
            trace.records.append((used, loss))
            success = cand_success
        elif cand_success and early_stop:
            # a successful candidate is returned even without a loss improvement
            state, x_best, best_logits, success = cand, x_cand, logits, True
        if success and trace.success_query is None:
            trace.success_query = used

    trace.queries_used = used
    trace.success = bool(success)
    if not success:
        trace.success_query = None
    trace.final_loss = float(goal.loss(best_logits))
    return AttackResult(x_best, trace, state, best_logits)


def restarts_search(x_orig, goal, make_adapter, n_queries: int, seed: int, restarts: int = 1,
                    early_stop: bool = True, validate: bool = True):
    """Up to ``restarts`` independent runs; stop at the first success.

    Run 0 uses ``seed`` itself so a single restart equals a plain run.
    ``make_adapter()`` must return a fresh adapter per run.
    """
    best = None
    offset = 0
    for r in range(restarts):
        rng = RngStream(seed if r == 0 else derive_seed(seed, "restart", r))
        res = yield from random_search(x_orig, goal, make_adapter(), n_queries, rng,
                                       early_stop=early_stop, validate=validate)
        t = res.trace
        shifted = [(q + offset, loss) for q, loss in t.records]
        sq = None if t.success_query is None else t.success_query + offset
        offset += t.queries_used
        if best is None or (t.success and not best.trace.success) or \
                (t.success == best.trace.success and t.final_loss < best.trace.final_loss):
            best = AttackResult(res.x_adv, AttackTrace(shifted, 0, t.success, sq, t.final_loss),
                                res.state, res.logits)
        if t.success and early_stop:
            break
        if t.queries_used < n_queries and not t.success:
            break  # the oracle's own limit ran out
    best.trace.queries_used = offset
    return best


def run_attack(oracle, x_orig, goal, adapter, n_queries: int, seed: int,
               early_stop: bool = True) -> AttackResult:
    return run_generator(oracle, random_search(x_orig, goal, adapter, n_queries,
                                               RngStream(seed), early_stop=early_stop))


def run_with_restarts(oracle, x_orig, goal, make_adapter, n_queries: int, seed: int,
                      restarts: int, early_stop: bool = True) -> AttackResult:
    return run_generator(oracle, restarts_search(x_orig, goal, make_adapter, n_queries, seed,
                                                 restarts, early_stop=early_stop))


def evaluate_initial(oracle, x_orig, goal: AttackGoal):
    """Loss and success flag of the unperturbed input; costs one query."""
    logits = oracle.forward(x_orig)
    return goal.loss(logits), goal.success(logits)
