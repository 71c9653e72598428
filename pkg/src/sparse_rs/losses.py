"""Attack objectives. Both losses are minimised by the attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AttackGoal:
    """Untargeted (move away from ``label``) or targeted (reach ``label``)."""

    label: int
    targeted: bool = False

    @classmethod
    def untargeted(cls, y: int) -> "AttackGoal":
        return cls(int(y), False)

    @classmethod
    def target(cls, t: int) -> "AttackGoal":
        return cls(int(t), True)

    def loss(self, logits) -> float:
        if self.targeted:
            return targeted_ce_loss(logits, self.label)
        return margin_loss(logits, self.label)

    def losses(self, logits) -> np.ndarray:
        """Row-wise loss for a batch of logits."""
        logits = np.asarray(logits, dtype=np.float64)
        if self.targeted:
            return ce_losses(logits, np.full(len(logits), self.label))
        return margin_losses(logits, np.full(len(logits), self.label))

    def success(self, logits) -> bool:
        return is_success(logits, self)

    def loss_and_grad(self, logits):
        """``(losses, dloss/dlogits)`` for a batch, as used by backprop."""
        labels = np.full(len(logits), self.label)
        if self.targeted:
            return ce_losses(logits, labels), ce_grad(logits, labels)
        return margin_losses(logits, labels), margin_grad(logits, labels)


def _check(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError("need a vector of at least 2 logits")
    return z


def margin_loss(logits, y: int) -> float:
    """``f_y - max_{r != y} f_r``; negative exactly when another class wins."""
    z = _check(logits)
    others = np.delete(z, y)
    return float(z[y] - others.max())


def targeted_ce_loss(logits, t: int) -> float:
    """Cross-entropy of class ``t``, computed with a max shift."""
    z = _check(logits)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    zmax = z.max()
    return float(zmax + np.log(np.sum(np.exp(z - zmax))) - z[t])


def predicted_class(logits) -> int:
    # np.argmax returns the first maximal index: ties go to the lowest class
    return int(np.argmax(np.asarray(logits)))


def is_success(logits, goal: AttackGoal) -> bool:
    pred = predicted_class(logits)
    return pred == goal.label if goal.targeted else pred != goal.label


def margin_losses(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    rows = np.arange(len(z))
    own = z[rows, labels]
    masked = z.copy()
    masked[rows, labels] = -np.inf
    return own - masked.max(axis=1)


def margin_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    rows = np.arange(len(z))
    masked = z.copy()
    masked[rows, labels] = -np.inf
    runner_up = masked.argmax(axis=1)
    g = np.zeros_like(z)
    g[rows, labels] = 1.0
    g[rows, runner_up] -= 1.0
    return g


def ce_losses(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(len(z)), labels]


def ce_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    p[np.arange(len(z)), labels] -= 1.0
    return p
