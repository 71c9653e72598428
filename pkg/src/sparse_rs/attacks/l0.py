"""l0-RS: random search over a set of ``k`` perturbed elements.

Elements are pixels (each gets a corner of the color cube), single scalar
features (each set to 0 or 1) or, for binary inputs, features that may only
be switched on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..schedules import PiecewiseAlphaSchedule, alpha_at, swap_count

SPACES = ("pixel", "feature", "binary_add_only")


@dataclass(frozen=True)
class L0Config:
    k: int
    space: str = "pixel"
    alpha_init: float = 0.3
    constant_alpha: float | None = None

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}")
        if self.k < 1:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class L0State:
    M: np.ndarray      # (k,) element indices
    delta: np.ndarray  # (k, values per element)


def default_alpha(space: str, targeted: bool) -> float:
    if space == "binary_add_only":
        return 1.6
    return 0.1 if targeted else 0.3


class L0Adapter:
    def __init__(self, shape, cfg: L0Config, n_queries: int, addable=None):
        h, w, c = shape
        self.shape = tuple(shape)
        self.cfg = cfg
        self.per_element = c if cfg.space == "pixel" else 1
        self.n_elements = h * w if cfg.space == "pixel" else h * w * c
        if cfg.space == "binary_add_only":
            if addable is None:
                raise ValueError("binary_add_only needs the set of addable features")
            self.universe = np.asarray(addable, dtype=np.int64)
        else:
            self.universe = np.arange(self.n_elements)
        if cfg.k > len(self.universe):
            raise ValueError(f"k={cfg.k} exceeds the {len(self.universe)} available elements")
        self.schedule = PiecewiseAlphaSchedule(cfg.alpha_init, n_queries, cfg.constant_alpha)
        self._in_universe = np.zeros(self.n_elements, dtype=bool)
        self._in_universe[self.universe] = True

    def _colors(self, rng, n):
        if self.cfg.space == "binary_add_only":
            return np.ones((n, 1), dtype=np.float32)
        return rng.integers(0, 2, size=(n, self.per_element)).astype(np.float32)

    def init_state(self, rng) -> L0State:
        M = rng.init.choice(self.universe, size=self.cfg.k, replace=False)
        return L0State(M, self._colors(rng.init, self.cfg.k))

    def n_swaps(self, i: int) -> int:
        return swap_count(alpha_at(self.schedule, i), self.cfg.k)

    def propose(self, state: L0State, i: int, rng) -> L0State:
        k = self.cfg.k
        free_mask = self._in_universe.copy()
        free_mask[state.M] = False
        free = np.flatnonzero(free_mask)
        n = min(self.n_swaps(i), k, len(free))
        M = state.M.copy()
        delta = state.delta.copy()
        if n == 0:
            # every element is already perturbed: recolor a subset instead
            n = min(self.n_swaps(i), k)
            pos = rng.content.choice(k, size=n, replace=False)
            delta[pos] = self._colors(rng.content, n)
            return L0State(M, delta)
        pos = rng.location.choice(k, size=n, replace=False)
        M[pos] = rng.location.choice(free, size=n, replace=False)
        delta[pos] = self._colors(rng.content, n)
        return L0State(M, delta)

    def materialize(self, x_orig, state: L0State) -> np.ndarray:
        x = np.array(x_orig, dtype=np.float32).reshape(self.n_elements, self.per_element)
        x[state.M] = state.delta
        return x.reshape(self.shape)

    def changed_elements(self, x_orig, x) -> np.ndarray:
        a = np.asarray(x_orig).reshape(self.n_elements, self.per_element)
        b = np.asarray(x).reshape(self.n_elements, self.per_element)
        return np.flatnonzero(np.any(a != b, axis=1))

    def feasible(self, x_orig, x) -> bool:
        if np.shape(x) != self.shape or not np.all((x >= 0) & (x <= 1)):
            return False
        changed = self.changed_elements(x_orig, x)
        if len(changed) > self.cfg.k:
            return False
        if self.cfg.space == "binary_add_only":
            return bool(np.all(self._in_universe[changed]) and np.all(
                np.asarray(x).ravel()[changed] == 1))
        return True


# functional aliases mirroring the adapter methods
def l0_init(adapter: L0Adapter, rng) -> L0State:
    return adapter.init_state(rng)


def l0_propose(adapter: L0Adapter, state: L0State, i: int, rng) -> L0State:
    return adapter.propose(state, i, rng)


def l0_materialize(adapter: L0Adapter, x_orig, state: L0State) -> np.ndarray:
    return adapter.materialize(x_orig, state)
