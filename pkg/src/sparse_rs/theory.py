"""Expected query count of single-swap random search on a linear top-k problem.

Given ``d`` distinct weights, the search keeps a set ``M`` of ``k`` indices
and proposes swapping one member for one non-member, accepting iff the sum of
selected weights decreases. It stops once ``M`` lies within the ``m``
smallest weights. Starting from a set disjoint from those ``m``, the number
of proposals needed has expectation

    (d - k) k  sum_{i=0}^{k-1} 1 / ((k - i)(m - i)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import derive_seed


def _check(d: int, k: int, m: int):
    if not (1 <= k <= m <= d):
        raise ValueError(f"need 1 <= k <= m <= d, got d={d}, k={k}, m={m}")


def harmonic(n: int) -> float:
    return math.fsum(1.0 / j for j in range(1, n + 1))


def expected_queries_exact(d: int, k: int, m: int) -> float:
    _check(d, k, m)
    return (d - k) * k * math.fsum(1.0 / ((k - i) * (m - i)) for i in range(k))


def expected_queries_harmonic(d: int, k: int, m: int) -> float:
    """Same value through harmonic numbers; requires ``m > k``."""
    _check(d, k, m)
    if m == k:
        raise ValueError("the harmonic form needs m > k")
    return (d - k) * k / (m - k) * (harmonic(k) - harmonic(m) + harmonic(m - k))


def expected_queries_bound(d: int, k: int, m: int) -> float:
    """Upper bound ``(d - k) k (ln k + 2) / (m - k)``; requires ``m > k``."""
    _check(d, k, m)
    if m == k:
        raise ValueError("the bound needs m > k")
    return (d - k) * k * (math.log(k) + 2) / (m - k)


def expected_queries_m_equals_k_bound(d: int, k: int) -> float:
    """For ``m = k`` the sum is a partial zeta(2) series, below ``pi^2/6 (d-k) k``."""
    return math.pi ** 2 / 6 * (d - k) * k


@dataclass(frozen=True)
class TopKProblem:
    d: int
    k: int
    m: int
    weights: np.ndarray | None = None

    def __post_init__(self):
        _check(self.d, self.k, self.m)
        if self.weights is not None:
            w = np.asarray(self.weights)
            if w.shape != (self.d,) or len(np.unique(w)) != self.d:
                raise ValueError("weights must be d distinct values")


@dataclass(frozen=True)
class SimulationResult:
    mean: float
    stderr: float
    counts: np.ndarray


def simulate_once(problem: TopKProblem, rng: np.random.Generator, record=None) -> int:
    """Number of proposals until ``M`` is inside the ``m`` smallest weights.

    ``M`` starts outside the target set when possible. ``record``, if given,
    receives the qualifying count after every proposal.
    """
    d, k, m = problem.d, problem.k, problem.m
    w = rng.random(d) if problem.weights is None else np.asarray(problem.weights, dtype=np.float64)
    order = np.argsort(w)
    in_s = np.zeros(d, dtype=bool)
    in_s[order[:m]] = True
    outside = np.flatnonzero(~in_s)
    if len(outside) >= k:
        members = rng.choice(outside, size=k, replace=False)
    else:
        extra = rng.choice(np.flatnonzero(in_s), size=k - len(outside), replace=False)
        members = np.concatenate([outside, extra])
    in_m = np.zeros(d, dtype=bool)
    in_m[members] = True
    members = list(members)
    others = list(np.flatnonzero(~in_m))
    good = int(in_s[members].sum())
    queries = 0
    while good < k:
        a = int(rng.integers(k))
        b = int(rng.integers(d - k))
        p, q = members[a], others[b]
        queries += 1
        if w[q] < w[p]:
            good += int(in_s[q]) - int(in_s[p])
            members[a], others[b] = q, p
        if record is not None:
            record.append(good)
    return queries


def simulate_topk(problem: TopKProblem, trials: int, seed: int = 0) -> SimulationResult:
    if trials < 1:
        raise ValueError("trials must be positive")
    counts = np.array([simulate_once(problem, np.random.default_rng(derive_seed(seed, "trial", t)))
                       for t in range(trials)], dtype=np.float64)
    se = counts.std(ddof=1) / math.sqrt(trials) if trials > 1 else float("nan")
    return SimulationResult(float(counts.mean()), float(se), counts)


DEFAULT_M_GRID = (151, 200, 300, 500, 1000, 2000, 5000, 10000, 20000, 50000, 100000, 150528)


def fig7_rows(d: int = 150528, k: int = 150, m_grid=DEFAULT_M_GRID):
    """``(m, exact, bound, naive)`` rows; ``bound`` is None when ``m == k``."""
    rows = []
    for m in m_grid:
        exact = expected_queries_exact(d, k, m)
        bound = expected_queries_bound(d, k, m) if m > k else None
        rows.append((m, exact, bound, d))
    return rows


def fig7_table(d: int = 150528, k: int = 150, m_grid=DEFAULT_M_GRID) -> str:
    lines = ["m,exact,bound,naive"]
    for m, exact, bound, naive in fig7_rows(d, k, m_grid):
        lines.append(f"{m},{exact!r},{'' if bound is None else repr(bound)},{naive}")
    return "\n".join(lines) + "\n"
