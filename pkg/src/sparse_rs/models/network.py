"""A small feed-forward network: dense, conv2d, relu, flatten and global average pooling.

Inputs are batches of HWC images ``(n, h, w, c)``. Every layer accumulates
in float64 and :meth:`Network.logits` rounds the result to float32, so the
logits of one row do not depend on which other rows share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("dense", "conv2d", "relu", "flatten", "gap")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    n_in: int = 0
    n_out: int = 0
    k: int = 0
    ci: int = 0
    co: int = 0
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @classmethod
    def dense(cls, n_in, n_out):
        return cls("dense", n_in=n_in, n_out=n_out)

    @classmethod
    def conv2d(cls, k, ci, co, stride=1, padding=0):
        return cls("conv2d", k=k, ci=ci, co=co, stride=stride, padding=padding)

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def flatten(cls):
        return cls("flatten")

    @classmethod
    def gap(cls):
        """Global average pooling over the spatial axes."""
        return cls("gap")

    def param_shapes(self) -> list:
        if self.kind == "dense":
            return [(self.n_out, self.n_in), (self.n_out,)]
        if self.kind == "conv2d":
            return [(self.co, self.k, self.k, self.ci), (self.co,)]
        return []

    def output_shape(self, in_shape: tuple) -> tuple:
        if self.kind == "dense":
            if in_shape != (self.n_in,):
                raise ValueError(f"dense expects ({self.n_in},), got {in_shape}")
            return (self.n_out,)
        if self.kind == "conv2d":
            if len(in_shape) != 3 or in_shape[2] != self.ci:
                raise ValueError(f"conv2d expects (h, w, {self.ci}), got {in_shape}")
            h, w, _ = in_shape
            ho = (h + 2 * self.padding - self.k) // self.stride + 1
            wo = (w + 2 * self.padding - self.k) // self.stride + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"conv2d kernel {self.k} too large for {in_shape}")
            return (ho, wo, self.co)
        if self.kind == "flatten":
            return (int(np.prod(in_shape)),)
        if self.kind == "gap":
            if len(in_shape) != 3:
                raise ValueError(f"gap expects (h, w, c), got {in_shape}")
            return (in_shape[2],)
        return in_shape

    def to_dict(self) -> dict:
        if self.kind == "dense":
            return {"kind": "dense", "in": self.n_in, "out": self.n_out}
        if self.kind == "conv2d":
            return {"kind": "conv2d", "k": self.k, "ci": self.ci, "co": self.co,
                    "stride": self.stride, "padding": self.padding}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        kind = d["kind"]
        if kind == "dense":
            return cls.dense(int(d["in"]), int(d["out"]))
        if kind == "conv2d":
            return cls.conv2d(int(d["k"]), int(d["ci"]), int(d["co"]),
                              int(d.get("stride", 1)), int(d.get("padding", 0)))
        return cls(kind)


def _im2col(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    # win: (n, ho, wo, ci, k, k) -> (n, ho, wo, k, k, ci)
    return win.transpose(0, 1, 2, 4, 5, 3)


class Network:
    """Weights plus forward and reverse-mode evaluation."""

    def __init__(self, input_shape, layers, params=None):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            shape = layer.output_shape(shape)
            self.shapes.append(shape)
        if len(shape) != 1:
            raise ValueError(f"network must end in a vector, got {shape}")
        self.num_classes = shape[0]
        if params is None:
            params = [[np.zeros(s, dtype=np.float32) for s in layer.param_shapes()]
                      for layer in self.layers]
        self.params = []
        for layer, p in zip(self.layers, params):
            shapes = layer.param_shapes()
            if len(p) != len(shapes):
                raise ValueError(f"{layer.kind}: expected {len(shapes)} parameter arrays")
            arrs = []
            for arr, s in zip(p, shapes):
                arr = np.asarray(arr, dtype=np.float32)
                if arr.size != int(np.prod(s)):
                    raise ValueError(f"{layer.kind}: parameter size {arr.size} != {int(np.prod(s))}")
                arrs.append(arr.reshape(s))
            self.params.append(arrs)

    @property
    def num_params(self) -> int:
        return sum(a.size for p in self.params for a in p)

    def _forward(self, x: np.ndarray, keep: bool):
        cache = []
        h = np.asarray(x, dtype=np.float64)
        for layer, p in zip(self.layers, self.params):
            inp = h
            if layer.kind == "dense":
                h = inp @ p[0].T.astype(np.float64) + p[1]
                cache.append(inp if keep else None)
            elif layer.kind == "conv2d":
                cols = _im2col(inp, layer.k, layer.stride, layer.padding)
                n, ho, wo = cols.shape[:3]
                flat = cols.reshape(n * ho * wo, -1)
                w = p[0].reshape(layer.co, -1).astype(np.float64)
                h = (flat @ w.T + p[1]).reshape(n, ho, wo, layer.co)
                cache.append((inp.shape, flat) if keep else None)
            elif layer.kind == "relu":
                h = np.maximum(inp, 0.0)
                cache.append(inp > 0 if keep else None)
            elif layer.kind == "gap":
                h = inp.mean(axis=(1, 2))
                cache.append(inp.shape if keep else None)
            else:
                h = inp.reshape(len(inp), -1)
                cache.append(inp.shape if keep else None)
        return h, cache

    def logits64(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x, keep=False)[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch ``x`` of shape ``(n, *input_shape)``."""
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected inputs of shape {self.input_shape}, got {x.shape[1:]}")
        return self.logits64(x).astype(np.float32)

    def backward(self, x: np.ndarray, dlogits_fn):
        """Run forward then backward.

        ``dlogits_fn(logits64) -> (losses, dlogits)`` supplies the loss and
        its gradient wrt the logits. Returns ``(losses, grad_input,
        param_grads)`` with everything in float64.
        """
        out, cache = self._forward(x, keep=True)
        losses, g = dlogits_fn(out)
        grads = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer, p, c = self.layers[idx], self.params[idx], cache[idx]
            if layer.kind == "dense":
                grads[idx] = [g.T @ c, g.sum(axis=0)]
                g = g @ p[0].astype(np.float64)
            elif layer.kind == "conv2d":
                in_shape, flat = c
                n, ho, wo, co = g.shape
                g2 = g.reshape(-1, co)
                w = p[0].reshape(co, -1).astype(np.float64)
                grads[idx] = [(g2.T @ flat).reshape(p[0].shape), g2.sum(axis=0)]
                dcols = (g2 @ w).reshape(n, ho, wo, layer.k, layer.k, layer.ci)
                g = self._col2im(dcols, in_shape, layer)
            elif layer.kind == "relu":
                g = g * c
            elif layer.kind == "gap":
                n, hh, ww, cc = c
                g = np.broadcast_to(g[:, None, None, :] / (hh * ww), c).copy()
            else:
                g = g.reshape(c)
        return losses, g, grads

    @staticmethod
    def _col2im(dcols, in_shape, layer):
        n, h, w, ci = in_shape
        pad, s, k = layer.padding, layer.stride, layer.k
        out = np.zeros((n, h + 2 * pad, w + 2 * pad, ci))
        ho, wo = dcols.shape[1:3]
        for a in range(k):
            for b in range(k):
                out[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s, :] += dcols[:, :, :, a, b, :]
        if pad:
            out = out[:, pad:pad + h, pad:pad + w, :]
        return out

    def input_gradient(self, x: np.ndarray, dlogits_fn) -> tuple:
        """Loss and gradient wrt a single input ``x`` (no batch axis)."""
        losses, g, _ = self.backward(np.asarray(x)[None], dlogits_fn)
        return float(losses[0]), g[0]

    def copy(self) -> "Network":
        return Network(self.input_shape, self.layers,
                       [[a.copy() for a in p] for p in self.params])


def init_params(input_shape, layers, rng: np.random.Generator) -> list:
    """He-normal weights, zero biases."""
    params = []
    for layer in layers:
        shapes = layer.param_shapes()
        if not shapes:
            params.append([])
            continue
        w_shape, b_shape = shapes
        fan_in = int(np.prod(w_shape[1:]))
        w = rng.standard_normal(w_shape) * np.sqrt(2.0 / fan_in)
        params.append([w.astype(np.float32), np.zeros(b_shape, dtype=np.float32)])
    return params


def conv_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride=1, padding=0):
    """Direct nested-loop convolution of one HWC image, for testing."""
    x = np.pad(np.asarray(x, dtype=np.float64), ((padding, padding), (padding, padding), (0, 0)))
    co, k = weight.shape[0], weight.shape[1]
    h, w = x.shape[:2]
    ho, wo = (h - k) // stride + 1, (w - k) // stride + 1
    out = np.zeros((ho, wo, co))
    for i in range(ho):
        for j in range(wo):
            patch = x[i * stride:i * stride + k, j * stride:j * stride + k, :]
            for o in range(co):
                out[i, j, o] = np.sum(patch * weight[o]) + bias[o]
    return out
