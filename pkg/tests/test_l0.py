import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_rs.attacks.l0 import L0Adapter, L0Config, default_alpha
from sparse_rs.engine import RngStream, run_attack
from sparse_rs.losses import AttackGoal
from sparse_rs.models import ModelOracle


def walk(adapter, x, n, seed=0):
    rng = RngStream(seed)
    state = adapter.init_state(rng)
    yield state, adapter.materialize(x, state)
    for i in range(1, n):
        state = adapter.propose(state, i, rng)
        yield state, adapter.materialize(x, state)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.integers(0, 1000), st.sampled_from(["pixel", "feature"]))
def test_candidates_change_at_most_k_elements(k, seed, space):
    shape = (6, 5, 3)
    x = np.random.default_rng(seed).random(shape).astype(np.float32)
    adapter = L0Adapter(shape, L0Config(k, space), 200)
    for state, cand in walk(adapter, x, 40, seed):
        assert len(np.unique(state.M)) == k
        assert len(adapter.changed_elements(x, cand)) <= k
        assert adapter.feasible(x, cand)
        assert set(np.unique(cand[cand != x])) <= {0.0, 1.0}


def test_pixel_space_sets_all_channels_to_a_corner():
    shape = (4, 4, 3)
    x = np.full(shape, 0.5, dtype=np.float32)
    adapter = L0Adapter(shape, L0Config(3), 100)
    for state, cand in walk(adapter, x, 10):
        flat = cand.reshape(16, 3)
        assert np.all(np.isin(flat[state.M], [0.0, 1.0]))
        rest = np.setdiff1d(np.arange(16), state.M)
        assert np.all(flat[rest] == 0.5)


def test_swap_count_follows_the_schedule():
    adapter = L0Adapter((10, 10, 1), L0Config(20, "feature"), 10_000)
    rng = RngStream(1)
    state = adapter.init_state(rng)
    # 0.15 * 20 = 3 swaps at the start, 0.075 * 20 = 1.5 -> 2, then 1 (clamped) at the end
    for i, expected in ((1, 3), (100, 2), (9000, 1)):
        new = adapter.propose(state, i, rng)
        assert adapter.n_swaps(i) == expected
        assert np.sum(new.M != state.M) == expected
        assert len(np.intersect1d(np.setdiff1d(new.M, state.M), state.M)) == 0


def test_binary_add_only_only_switches_addable_features_on():
    d = 12
    x = np.zeros((d, 1, 1), dtype=np.float32)
    x[[1, 4]] = 1
    addable = np.array([0, 2, 3, 5, 7, 11])
    adapter = L0Adapter(x.shape, L0Config(3, "binary_add_only"), 300, addable=addable)
    for state, cand in walk(adapter, x, 60):
        changed = adapter.changed_elements(x, cand)
        assert set(changed) <= set(addable) and len(changed) == 3
        assert np.all(cand.ravel()[changed] == 1)
        assert adapter.feasible(x, cand)
    bad = x.copy()
    bad[6] = 1
    assert not adapter.feasible(x, bad)


def test_recolor_when_every_element_is_used():
    adapter = L0Adapter((2, 1, 1), L0Config(2, "feature"), 50)
    x = np.zeros((2, 1, 1), dtype=np.float32)
    states = [s for s, _ in walk(adapter, x, 30)]
    assert all(sorted(s.M.tolist()) == [0, 1] for s in states)
    assert len({tuple(s.delta.ravel()[np.argsort(s.M)]) for s in states}) > 1


def test_config_validation():
    with pytest.raises(ValueError):
        L0Config(0)
    with pytest.raises(ValueError):
        L0Config(2, "ball")
    with pytest.raises(ValueError, match="exceeds"):
        L0Adapter((2, 2, 1), L0Config(5, "feature"), 10)
    with pytest.raises(ValueError, match="addable"):
        L0Adapter((4, 1, 1), L0Config(1, "binary_add_only"), 10)
    assert default_alpha("pixel", False) == 0.3 and default_alpha("pixel", True) == 0.1


def test_attack_is_reproducible(tiny_net):
    x = np.random.default_rng(0).random((6, 6, 2)).astype(np.float32)
    y = int(np.argmax(tiny_net.logits(x[None])[0]))
    goal = AttackGoal.untargeted(y)
    runs = [run_attack(ModelOracle(tiny_net), x, goal, L0Adapter(x.shape, L0Config(4), 150), 150, 5)
            for _ in range(2)]
    assert runs[0].trace.records == runs[1].trace.records
    assert np.array_equal(runs[0].x_adv, runs[1].x_adv)
