import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparse_rs.models import LayerSpec, Network, init_params  # noqa: E402
from sparse_rs.models.train import default_arch, train_toy  # noqa: E402
from sparse_rs.tensor_io import synth_dataset  # noqa: E402

# toy victim used by the end-to-end tests: 32x32x3, 10 classes
TOY = dict(seed=0, n=2400, h=32, w=32, c=3, classes=10, noise=0.25, contrast=0.2)
TRAIN_N = 2000

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def toy_data():
    ds = synth_dataset(TOY["seed"], TOY["n"], TOY["h"], TOY["w"], TOY["c"], TOY["classes"],
                       noise=TOY["noise"], contrast=TOY["contrast"])
    return ds, np.arange(TRAIN_N), np.arange(TRAIN_N, TOY["n"])


@pytest.fixture(scope="session")
def toy_net(toy_data):
    ds, train_ids, _ = toy_data
    net, _ = train_toy(ds.subset(train_ids), default_arch(ds.image_shape, ds.class_count), seed=0)
    return net


def small_net(seed, input_shape=(6, 6, 2), classes=3, gap=False):
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    conv = LayerSpec.conv2d(3, c, 4, stride=2, padding=1)
    s1 = conv.output_shape(input_shape)
    if gap:
        tail = [LayerSpec.gap(), LayerSpec.dense(4, classes)]
    else:
        tail = [LayerSpec.flatten(), LayerSpec.dense(int(np.prod(s1)), classes)]
    layers = [conv, LayerSpec.relu()] + tail
    params = init_params(input_shape, layers, rng)
    # non-zero biases so every code path is exercised
    params = [[p[0], (rng.standard_normal(p[1].shape) * 0.1).astype(np.float32)] if p else p
              for p in params]
    return Network(input_shape, layers, params)


@pytest.fixture
def tiny_net():
    return small_net(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
