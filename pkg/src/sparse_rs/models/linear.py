from __future__ import annotations

import numpy as np


class LinearBinaryModel:
    """Score ``<w, x> + b`` on flat inputs, exposed as two logits ``[0, score]``.

    Class 1 stands for label +1 and class 0 for label -1, so the margin loss of
    class ``c`` equals ``y * score`` with ``y = 2c - 1``. Summation runs left
    to right in float64.
    """

    def __init__(self, weight, bias: float = 0.0):
        self.weight = np.asarray(weight, dtype=np.float64).ravel()
        self.bias = float(bias)
        self.num_classes = 2

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @property
    def input_shape(self) -> tuple:
        return (self.dim, 1, 1)

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {x.shape[0]}")
        return float(np.cumsum(self.weight * x)[-1] + self.bias)

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        scores = np.cumsum(x * self.weight, axis=1)[:, -1] + self.bias
        return np.stack([np.zeros_like(scores), scores], axis=1)

    def input_gradient(self, x, dlogits_fn):
        logits = self.logits(np.asarray(x)[None])
        losses, g = dlogits_fn(logits)
        grad = g[0, 1] * self.weight
        return float(losses[0]), grad.reshape(np.shape(x))
