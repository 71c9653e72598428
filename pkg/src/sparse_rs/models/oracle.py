"""Query-metered access to a model.

Every logits evaluation goes through a :class:`ModelOracle`, which counts
forward passes. Each attack run owns its own oracle; several oracles can wrap
the same (read-only) model.
"""

from __future__ import annotations

import threading

import numpy as np


class BudgetExhausted(Exception):
    """The oracle's query limit has been reached."""


class ModelOracle:
    def __init__(self, model, limit: int | None = None):
        self.model = model
        self.limit = limit
        self._count = 0
        self._lock = threading.Lock()

    @property
    def queries(self) -> int:
        return self._count

    @property
    def remaining(self):
        return None if self.limit is None else self.limit - self._count

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    @property
    def input_shape(self) -> tuple:
        return self.model.input_shape

    def fork(self, limit: int | None = None) -> "ModelOracle":
        """A fresh counter over the same model."""
        return ModelOracle(self.model, limit)

    def charge(self, n: int) -> None:
        with self._lock:
            if self.limit is not None and self._count + n > self.limit:
                raise BudgetExhausted(f"query limit {self.limit} reached")
            self._count += n

    def forward(self, x) -> np.ndarray:
        """Logits of a single input; costs one query."""
        return self.forward_batch(np.asarray(x)[None])[0]

    def forward_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs)
        self.charge(len(xs))
        out = self.model.logits(xs)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("model produced non-finite logits")
        return out

    def gradient(self, x, dlogits_fn):
        """White-box loss and input gradient; costs one query."""
        self.charge(1)
        return self.model.input_gradient(x, dlogits_fn)


def query_many(oracles, batches):
    """Evaluate ``batches[j]`` through ``oracles[j]`` with one model call per model.

    Returns one logits array per request, or a :class:`BudgetExhausted`
    instance for requests that would exceed their oracle's limit (those are
    not evaluated and not charged).
    """
    results = [None] * len(batches)
    groups = {}
    for j, (oracle, xs) in enumerate(zip(oracles, batches)):
        try:
            oracle.charge(len(xs))
        except BudgetExhausted as exc:
            results[j] = exc
            continue
        groups.setdefault(id(oracle.model), (oracle.model, []))[1].append(j)
    for model, members in groups.values():
        stacked = np.concatenate([np.asarray(batches[j]) for j in members])
        out = model.logits(stacked)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("model produced non-finite logits")
        start = 0
        for j in members:
            n = len(batches[j])
            results[j] = out[start:start + n]
            start += n
    return results
