"""SRSW1 weight files.

Layout: the magic line ``SRSW1\\n``, one JSON manifest line, then every
parameter as little-endian float32, layer by layer (weight then bias),
row-major. Dense weights are stored out x in; conv weights co x k x k x ci.
"""

from __future__ import annotations

import json

import numpy as np

from .network import LayerSpec, Network

MAGIC = b"SRSW1\n"


class WeightFileError(ValueError):
    pass


def save_weights(net: Network, path) -> None:
    manifest = {
        "input_shape": list(net.input_shape),
        "layers": [layer.to_dict() for layer in net.layers],
        "param_count": net.num_params,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(manifest, separators=(",", ":")).encode("utf-8") + b"\n")
        for p in net.params:
            for arr in p:
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path) -> Network:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise WeightFileError(f"{path}: bad magic")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise WeightFileError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[len(MAGIC):end].decode("utf-8"))
        layers = [LayerSpec.from_dict(d) for d in manifest["layers"]]
        input_shape = tuple(manifest["input_shape"])
        declared = int(manifest["param_count"])
    except (ValueError, KeyError, TypeError) as exc:
        raise WeightFileError(f"{path}: malformed manifest ({exc})") from None

    shapes = [s for layer in layers for s in layer.param_shapes()]
    expected = sum(int(np.prod(s)) for s in shapes)
    if declared != expected:
        raise WeightFileError(
            f"{path}: manifest declares {declared} params but layers need {expected}")
    body = raw[end + 1:]
    if len(body) < 4 * declared:
        raise WeightFileError(
            f"{path}: truncated, {declared} params declared but {len(body) // 4} present")
    if len(body) > 4 * declared:
        raise WeightFileError(f"{path}: {len(body) - 4 * declared} trailing bytes")

    flat = np.frombuffer(body, dtype="<f4").astype(np.float32)
    params, pos = [], 0
    for layer in layers:
        arrs = []
        for s in layer.param_shapes():
            n = int(np.prod(s))
            arrs.append(flat[pos:pos + n].reshape(s).copy())
            pos += n
        params.append(arrs)
    try:
        return Network(input_shape, layers, params)
    except ValueError as exc:
        raise WeightFileError(f"{path}: {exc}") from None
