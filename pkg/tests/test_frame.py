import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import frame_pixels_loop

from sparse_rs.attacks.frame import (FrameAdapter, FrameConfig, FrameMask, frame_materialize,
                                     frame_pixel_count, frame_support_ok)
from sparse_rs.engine import RngStream


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 8))
def test_pixel_count_matches_loop(h, w, fw):
    assert frame_pixel_count(h, w, fw) == len(frame_pixels_loop(h, w, fw))
    assert FrameMask(h, w, 3, fw).pixels.tolist() == frame_pixels_loop(h, w, fw)


def test_known_pixel_counts():
    assert frame_pixel_count(10, 10, 2) == 64
    assert frame_pixel_count(224, 224, 2) == 1776
    assert frame_pixel_count(224, 224, 3) == 2652


def test_inside_positions_match_brute_force():
    m = FrameMask(9, 11, 3, 2)
    for side in (1, 2, 3):
        expected = [r * 11 + c for r in range(9 - side + 1) for c in range(11 - side + 1)
                    if m.mask[r:r + side, c:c + side].all()]
        assert m.inside_positions(side).tolist() == expected
    assert len(m.inside_positions(3)) == 0
    assert len(FrameMask(3, 3, 1, 1).inside_positions(5)) == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.sampled_from(["frame_rs", "sa_in_frame"]), st.integers(0, 100))
def test_candidates_stay_inside_the_frame(fw, variant, seed):
    shape = (12, 10, 3)
    x = np.random.default_rng(seed).random(shape).astype(np.float32)
    adapter = FrameAdapter(shape, FrameConfig(fw, variant=variant), 200)
    rng = RngStream(seed)
    content = adapter.init_state(rng)
    for i in range(1, 60):
        new = adapter.propose(content, i, rng)
        cand = adapter.materialize(x, new)
        assert adapter.feasible(x, cand)
        assert np.all(np.isin(new, [0.0, 1.0]))
        content = new


def test_corner_anchored_region_can_be_l_shaped():
    # a 4x4 square anchored near a corner of a width-1 frame covers an L of 7 pixels
    m = FrameMask(8, 8, 3, 1)
    sampler = FrameAdapter((8, 8, 3), FrameConfig(1), 1000).sampler
    rng = np.random.default_rng(0)
    sizes = {len(sampler.region(4, rng)) for _ in range(400)}
    assert 7 in sizes and max(sizes) <= 7
    assert m.count == 28


def test_single_channel_phase_changes_one_channel():
    adapter = FrameAdapter((10, 10, 3), FrameConfig(2), 400)
    rng = RngStream(2)
    content = adapter.init_state(rng)
    for i in range(100, 200):  # single channel from 25% of the budget
        new = adapter.propose(content, i, rng)
        changed = np.any(new != content, axis=0)
        assert changed.sum() == 1
        content = new
    early = adapter.propose(content, 1, rng)
    assert np.any(early != content)


def test_support_check_and_materialize():
    m = FrameMask(6, 6, 1, 1)
    x = np.full((6, 6, 1), 0.5, dtype=np.float32)
    out = frame_materialize(x, np.ones((m.count, 1), dtype=np.float32), m)
    assert np.all(out[1:5, 1:5] == 0.5) and np.sum(out == 1) == 20
    assert frame_support_ok(x, out, m)
    out[3, 3] = 0
    assert not frame_support_ok(x, out, m)
    with pytest.raises(ValueError):
        FrameMask(4, 4, 1, 0)
