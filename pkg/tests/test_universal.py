import numpy as np
import pytest
from conftest import small_net
from oracles import naive_ce

from sparse_rs.attacks.frame import FrameMask
from sparse_rs.attacks.universal import (UniversalConfig, apply_frame, apply_patch,
                                         eval_universal, init_universal_content, load_universal,
                                         run_universal, save_universal, universal_loss)
from sparse_rs.models import ModelOracle


class Constant:
    """Predicts the same class for every input."""

    num_classes = 3
    input_shape = (6, 6, 2)

    def __init__(self, cls):
        self.cls = cls

    def logits(self, xs):
        z = np.zeros((len(xs), 3), dtype=np.float32)
        z[:, self.cls] = 1
        return z


def data(seed=0, n=20):
    rng = np.random.default_rng(seed)
    return rng.random((n, 6, 6, 2)).astype(np.float32), np.arange(n) % 3


def test_loss_of_one_image_is_its_cross_entropy():
    net = small_net(1)
    images, _ = data()
    cfg = UniversalConfig(2, size=3, n=1, n_queries=10, resample_period=10)
    content = np.ones((3, 3, 2), dtype=np.float32)
    got = universal_loss(ModelOracle(net), content, images[:1], np.array([[1, 2]]), 2, cfg)
    z = net.logits64(apply_patch(images[0], content, 1, 2)[None])[0]
    assert got == pytest.approx(naive_ce(z, 2), rel=1e-5)


def test_duplicated_image_doubles_its_term():
    net = small_net(2)
    images, _ = data()
    cfg = UniversalConfig(1, size=2, n=2, n_queries=10, resample_period=10)
    content = np.zeros((2, 2, 2), dtype=np.float32)
    loc = np.array([[0, 0]])
    one = universal_loss(ModelOracle(net), content, images[:1], loc, 1, cfg)
    oracle = ModelOracle(net)
    two = universal_loss(oracle, content, images[[0, 0]], np.repeat(loc, 2, 0), 1, cfg)
    assert two == pytest.approx(2 * one, rel=1e-6) and oracle.queries == 2


@pytest.mark.parametrize("threat, size", [("patch", 3), ("frame", 1)])
def test_query_accounting_and_determinism(threat, size):
    net = small_net(3)
    images, labels = data()
    cfg = UniversalConfig(0, threat=threat, size=size, n=7, n_queries=200, resample_period=50,
                          init_square_count=10)
    oracle = ModelOracle(net)
    content, trace = run_universal(oracle, images, labels, cfg, seed=4)
    # floor(50 / 7) = 7 batch evaluations per round, 4 rounds
    assert trace.queries_used == oracle.queries == 4 * 7 * 7
    assert trace.rounds == 4
    again, trace2 = run_universal(ModelOracle(net), images, labels, cfg, seed=4)
    assert np.array_equal(content, again) and trace.records == trace2.records
    # within a round the recorded loss only decreases
    for rnd in range(4):
        losses = [loss for _, r, loss in trace.records if r == rnd]
        assert all(a > b for a, b in zip(losses, losses[1:]))
    assert np.all(np.isin(content, [0.0, 1.0]))


def test_budget_limit_stops_cleanly():
    images, labels = data()
    cfg = UniversalConfig(0, size=2, n=5, n_queries=100, resample_period=50, init_square_count=5)
    oracle = ModelOracle(small_net(0), limit=23)
    _, trace = run_universal(oracle, images, labels, cfg, seed=0)
    assert trace.queries_used == oracle.queries == 20


def test_init_content_matches_the_run_start():
    images, labels = data()
    cfg = UniversalConfig(1, size=3, n=5, n_queries=5, resample_period=5, init_square_count=30)
    content, _ = run_universal(ModelOracle(small_net(0)), images, labels, cfg, seed=9)
    assert np.array_equal(content, init_universal_content(cfg, (6, 6, 2), 9))


def test_eval_on_constant_models():
    images, labels = data()
    cfg = UniversalConfig(2, size=2, n=5, n_queries=10, resample_period=10)
    content = np.zeros((2, 2, 2), dtype=np.float32)
    assert eval_universal(ModelOracle(Constant(2)), content, images, labels, cfg, 5) == 1.0
    assert eval_universal(ModelOracle(Constant(0)), content, images, labels, cfg, 5) == 0.0
    oracle = ModelOracle(Constant(2))
    eval_universal(oracle, content, images, labels, cfg, 5)
    assert oracle.queries == 5 * int(np.sum(labels != 2))


def test_target_class_images_are_excluded():
    images, _ = data(n=4)
    cfg = UniversalConfig(1, size=2, n=2, n_queries=10, resample_period=10)
    with pytest.raises(ValueError, match="outside target"):
        run_universal(ModelOracle(small_net(0)), images, np.ones(4, int), cfg, 0)
    assert eval_universal(ModelOracle(Constant(1)), np.zeros((2, 2, 2)), images,
                          np.ones(4, int), cfg) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        UniversalConfig(0, threat="ball")
    with pytest.raises(ValueError, match="divide"):
        UniversalConfig(0, n_queries=1000, resample_period=300)
    with pytest.raises(ValueError, match="at least one"):
        UniversalConfig(0, n=30, n_queries=100, resample_period=20)
    assert UniversalConfig(0).alpha == 0.05 and UniversalConfig(0, threat="frame").alpha == 2.0


@pytest.mark.parametrize("threat, size", [("patch", 3), ("frame", 2)])
def test_save_load_roundtrip(tmp_path, threat, size):
    cfg = UniversalConfig(1, threat=threat, size=size, n=5, n_queries=10, resample_period=10)
    content = init_universal_content(cfg, (8, 8, 3), 2)
    save_universal(tmp_path / "u.ppm", content, cfg, 2, (8, 8, 3))
    back, cfg2, seed = load_universal(tmp_path / "u.ppm")
    assert np.array_equal(back, content) and cfg2 == cfg and seed == 2


def test_apply_frame_touches_the_band_only():
    m = FrameMask(6, 6, 2, 1)
    x = np.full((6, 6, 2), 0.5, dtype=np.float32)
    out = apply_frame(x, np.zeros((m.count, 2)), m)
    assert np.all(out[1:5, 1:5] == 0.5) and np.all(out[0] == 0)
