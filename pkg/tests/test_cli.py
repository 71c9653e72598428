import csv
import io

import pytest

from sparse_rs.cli import main

SMALL = ["synth_shape=8x8x3", "synth_n=150", "train_n=120", "classes=3", "n_images=10"]


@pytest.fixture(scope="module")
def weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "toy.srsw"
    assert main(["train", *SMALL, "--out", str(path), "--epochs", "3"]) == 0
    return path


def test_theory_table(capsys):
    assert main(["theory", "--d", "100", "--k", "2", "--m-grid", "2,5,50"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["m", "exact", "bound", "naive"]
    assert [r[0] for r in rows[1:]] == ["2", "5", "50"] and rows[1][2] == ""


def test_theory_simulation(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["theory", "--simulate", "30,2,6", "--trials", "50", "--out", str(out)]) == 0
    rec = next(csv.DictReader(out.open()))
    assert rec["trials"] == "50" and float(rec["mean"]) > 0


@pytest.mark.parametrize("argv", [
    ["theory", "--simulate", "1,2"],
    ["theory", "--d", "10", "--k", "5", "--m-grid", "3"],
    ["attack", "attack=nope", "--out-dir", "x"],
    ["attack", "a.txt", "b.txt", "--out-dir", "x"],
    ["attack", "model=/nonexistent.srsw", *SMALL, "--out-dir", "x"],
])
def test_config_errors_exit_with_2(argv, capsys):
    assert main(argv) == 2
    assert "sparse-rs: error:" in capsys.readouterr().err


def test_attack_run_writes_reports(weights, tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["attack", f"model={weights}", *SMALL, "k=2", "n_queries=30", "seeds=0,1",
            "--out-dir", str(out), "--traces"]
    assert main(argv) == 0
    for name in ("config.txt", "rows.csv", "summary.csv", "curve.csv", "curve.svg"):
        assert (out / name).exists()
    assert (out / "curve.csv").read_text().startswith("queries,success_rate\n")
    assert any((out / "traces").iterdir())
    assert "success_rate" in capsys.readouterr().out
    curve = tmp_path / "c.csv"
    assert main(["curve", f"l0={out / 'rows.csv'}", "--out", str(curve),
                 "--svg", str(tmp_path / "c.svg")]) == 0
    assert (tmp_path / "c.svg").read_text().startswith("<svg")


def test_universal_and_ablation(weights, tmp_path, capsys):
    assert main(["universal", f"model={weights}", *SMALL, "target=1", "s=3", "batch_size=5",
                 "n_queries=100", "resample_period=50", "locations_per_image=2",
                 "--out", str(tmp_path / "u.ppm")]) == 0
    assert "success_rate=" in capsys.readouterr().out
    assert (tmp_path / "u.json").exists()
    out = tmp_path / "abl.csv"
    assert main(["ablation", f"model={weights}", *SMALL, "attack=patch", "s=3", "n_queries=20",
                 "--sweep", "ratio", "--values", "1:4,1:1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
