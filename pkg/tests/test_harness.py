import math

import numpy as np
import pytest
from conftest import small_net

from sparse_rs.harness import (ConfigError, ExperimentConfig, ImageRow, ablation, ablation_csv,
                               curve_csv, default_grid, default_workers, format_config,
                               load_config, parse_pairs, read_rows_csv, run_suite,
                               success_curve, summarize)


def row(image_id, correct=True, success=False, used=0, sq=None, seed=0):
    return ImageRow(image_id, seed, 0, -1, correct, success, used, sq, 0.0)


def toy_inputs(n=12, seed=0):
    net = small_net(7)
    x = np.random.default_rng(seed).random((n, 6, 6, 2)).astype(np.float32)
    preds = net.logits(x).argmax(1)
    labels = preds.copy()
    labels[::4] = (labels[::4] + 1) % 3   # a few initially misclassified points
    return net, x, labels


def test_all_misclassified_gives_na():
    s = summarize([row(0, correct=False, success=True), row(1, correct=False, success=True)], 0)
    assert s.success_rate is None and s.robust_error == 1.0 and s.mean_queries is None


def test_query_statistics_over_all_attacked_points():
    s = summarize([row(0, success=True, used=7, sq=7)], 0)
    assert s.mean_queries == s.median_queries == 7
    s = summarize([row(0, success=True, used=5, sq=5), row(1, used=100)], 0)
    assert s.mean_queries == s.median_queries == 52.5
    assert s.success_rate == 0.5 and s.robust_error == 0.5


def test_curve_is_monotone_and_ends_at_the_success_rate():
    rows = [row(0, success=True, used=3, sq=3), row(1, success=True, used=9, sq=9), row(2, used=10),
            row(3, correct=False, success=True)]
    curve = success_curve(rows, [0, 3, 5, 9, 10])
    assert curve == [(0, 0.0), (3, 1 / 3), (5, 1 / 3), (9, 2 / 3), (10, 2 / 3)]
    assert curve_csv(curve).splitlines()[0] == "queries,success_rate"
    assert default_grid(10, 5) == [0, 2, 4, 6, 8, 10]


def test_suite_report_is_consistent_with_the_oracle():
    net, x, labels = toy_inputs()
    cfg = ExperimentConfig(attack="l0", k=2, n_queries=40, seeds=(0, 1))
    rep = run_suite(cfg, net, x, labels, workers=1)
    assert rep.self_check()
    assert len(rep.rows) == 2 * len(x)
    for r in rep.rows:
        if r.initially_correct:
            assert r.queries_used == r.oracle_queries and r.queries_used <= 40
        else:
            assert r.queries_used == 0 and math.isnan(r.final_loss)
    assert sum(not r.initially_correct for r in rep.rows_for(0)) == 3
    back = read_rows_csv(rep.rows_csv())
    assert [(r.image_id, r.success, r.queries_used) for r in back] == \
        [(r.image_id, r.success, r.queries_used) for r in rep.rows]
    assert "mean" in rep.summary_csv() and "std" in rep.summary_csv()


@pytest.mark.parametrize("attack", ["l0", "patch", "frame", "pgd0_ge", "jsma_ce_ge",
                                    "pgd0_white", "jsma_ce_white"])
def test_every_attack_runs_and_is_worker_independent(attack):
    net, x, labels = toy_inputs(6)
    cfg = ExperimentConfig(attack=attack, goal="targeted", k=2, s=2, w=1, n_queries=30)
    one = run_suite(cfg, net, x, labels, workers=1)
    two = run_suite(cfg, net, x, labels, workers=2)
    assert one.rows_csv() == two.rows_csv()
    assert [r.trace.records for r in one.rows if r.trace] == \
        [r.trace.records for r in two.rows if r.trace]
    assert all(r.target != r.label for r in one.rows)


def test_restarts_multiply_the_oracle_limit():
    net, x, labels = toy_inputs(4)
    cfg = ExperimentConfig(attack="l0", k=1, n_queries=10, restarts=3, early_stop=False)
    rep = run_suite(cfg, net, x, labels)
    assert {r.queries_used for r in rep.rows if r.initially_correct} == {30}


def test_ratio_sweep():
    net, x, labels = toy_inputs(4)
    cfg = ExperimentConfig(attack="patch", s=2, n_queries=20)
    values = ["9:1", "4:1", "1:1", "1:4", "1:9"]
    reports = ablation(cfg, "ratio", values, net, x, labels)
    assert [v for v, _ in reports] == [(9, 1), (4, 1), (1, 1), (1, 4), (1, 9)]
    text = ablation_csv("ratio", reports)
    assert text.splitlines()[1].startswith("ratio,9:1,")
    single = ablation(cfg, "alpha_init", [0.4], net, x, labels)[0][1]
    base = run_suite(cfg, net, x, labels)
    assert single.summaries == base.summaries


def test_config_parsing_and_errors(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\nattack = patch\nseeds=0-2\nratio=1:4\nn_queries=none\n")
    cfg = load_config(p, ["s=4", "early_stop=false"])
    assert cfg.attack == "patch" and cfg.seeds == (0, 1, 2) and cfg.ratio == (1, 4)
    assert cfg.s == 4 and cfg.early_stop is False and cfg.budget == 1000
    assert load_config(None, ["attack=l0"]).budget == 1000
    assert load_config(None, ["attack=universal", "goal=targeted", "target=1"]).budget == 10_000
    again = load_config(None, format_config(cfg).splitlines())
    assert again == cfg
    for bad in (["attack=foo"], ["k=0"], ["bogus=1"], ["k=x"], ["noequals"],
                ["attack=universal", "goal=untargeted"], ["ratio=0:0"]):
        with pytest.raises(ConfigError):
            load_config(None, bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.txt")
    assert parse_pairs(["seeds=3,5"]) == {"seeds": (3, 5)}


def test_shape_mismatch_and_universal_are_rejected():
    net, x, labels = toy_inputs(2)
    with pytest.raises(ConfigError, match="do not fit"):
        run_suite(ExperimentConfig(), net, x[:, :4], labels)
    with pytest.raises(ConfigError):
        run_suite(ExperimentConfig(attack="universal", goal="targeted", target=0), net, x, labels)


def test_worker_env(monkeypatch):
    monkeypatch.delenv("SPARSE_RS_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("SPARSE_RS_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("SPARSE_RS_WORKERS", "x")
    with pytest.raises(ConfigError):
        default_workers()
