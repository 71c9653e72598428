"""Command-line entry point: ``sparse-rs <command> [config] [key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, theory
from .harness import ConfigError

log = logging.getLogger("sparse_rs")


def _split_positional(items):
    path, overrides = None, []
    for item in items:
        if "=" in item:
            overrides.append(item)
        elif path is None:
            path = item
        else:
            raise ConfigError(f"unexpected argument {item!r}; overrides look like key=value")
    return path, overrides


def _config(args, extra=()):
    path, overrides = _split_positional(args.settings)
    return harness.load_config(path, list(overrides) + list(extra))


def _write(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def cmd_train(args) -> int:
    from .models.train import accuracy
    from .models.weights import save_weights
    from .tensor_io import save_dataset
    cfg = _config(args)
    ds, train_ids, test_ids = harness.load_data(cfg)
    if len(train_ids) == 0:
        raise ConfigError("train_n must be positive to train a model")
    net, report = harness.train_default_model(ds, train_ids, seed=args.seed, epochs=args.epochs)
    save_weights(net, args.out)
    test_acc = accuracy(net, ds.images[test_ids], ds.labels[test_ids]) if len(test_ids) else float("nan")
    print(f"train_accuracy={report.train_accuracy:.4f} test_accuracy={test_acc:.4f} "
          f"weights={args.out}")
    if args.save_test:
        save_dataset(ds.subset(test_ids), args.save_test)
    return 0


def _suite_inputs(cfg):
    ds, train_ids, test_ids = harness.load_data(cfg)
    model = harness.load_model(cfg, ds, train_ids)
    return model, ds, test_ids


def cmd_attack(args) -> int:
    extra = [f"workers={args.workers}"] if args.workers else []
    cfg = _config(args, extra)
    model, ds, ids = _suite_inputs(cfg)
    report = harness.run_suite(cfg, model, ds.images[ids], ds.labels[ids], ids)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(harness.format_config(cfg))
    (out / "rows.csv").write_text(report.rows_csv())
    (out / "summary.csv").write_text(report.summary_csv())
    grid = harness.default_grid(cfg.budget * (cfg.restarts if cfg.attack in ("l0", "patch", "frame") else 1))
    series = {}
    curves = []
    for seed in cfg.seeds:
        curve = harness.success_curve(report.rows_for(seed), grid)
        curves.append(curve)
        series[f"seed {seed}"] = ([q for q, _ in curve], [r for _, r in curve])
    mean_curve = [(q, float(np.mean([c[j][1] for c in curves]))) for j, (q, _) in enumerate(curves[0])]
    (out / "curve.csv").write_text(harness.curve_csv(mean_curve))
    from .plotting import line_plot
    (out / "curve.svg").write_text(line_plot(series, title=f"{cfg.attack} ({cfg.goal})"))
    if args.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in report.rows:
            if r.trace is not None:
                (tdir / f"seed{r.seed}_img{r.image_id}.csv").write_text(r.trace.to_csv())
    sys.stdout.write(report.summary_csv())
    return 0


def cmd_universal(args) -> int:
    from .attacks.universal import (eval_universal, init_universal_content, run_universal,
                                    save_universal)
    from .models.oracle import ModelOracle
    cfg = _config(args, ["attack=universal", "goal=targeted"])
    ds, train_ids, test_ids = harness.load_data(cfg)
    if len(train_ids) == 0:
        raise ConfigError("universal attacks need a training split (train_n > 0)")
    model = harness.load_model(cfg, ds, train_ids)
    ucfg = harness.universal_config(cfg)
    seed = cfg.seeds[0]
    oracle = ModelOracle(model)
    content, trace = run_universal(oracle, ds.images[train_ids], ds.labels[train_ids], ucfg, seed)
    save_universal(args.out, content, ucfg, seed, ds.image_shape)
    test_x, test_y = ds.images[test_ids], ds.labels[test_ids]
    rate = eval_universal(oracle, content, test_x, test_y, ucfg, cfg.locations_per_image, seed + 1)
    base = init_universal_content(ucfg, ds.image_shape, seed)
    rate0 = eval_universal(oracle, base, test_x, test_y, ucfg, cfg.locations_per_image, seed + 1)
    print(f"target={ucfg.target} queries={trace.queries_used} success_rate={rate:.4f} "
          f"init_success_rate={rate0:.4f} content={args.out}")
    return 0


def cmd_theory(args) -> int:
    if args.simulate:
        try:
            d, k, m = (int(v) for v in args.simulate.split(","))
            problem = theory.TopKProblem(d, k, m)
        except ValueError as exc:
            raise ConfigError(f"--simulate expects d,k,m: {exc}") from None
        res = theory.simulate_topk(problem, args.trials, args.seed)
        exact = theory.expected_queries_exact(d, k, m)
        _write(args.out, "d,k,m,trials,mean,stderr,exact\n"
               f"{d},{k},{m},{args.trials},{res.mean!r},{res.stderr!r},{exact!r}\n")
        return 0
    grid = theory.DEFAULT_M_GRID if not args.m_grid else [int(v) for v in args.m_grid.split(",")]
    try:
        text = theory.fig7_table(args.d, args.k, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(args.out, text)
    if args.svg:
        from .plotting import line_plot
        rows = theory.fig7_rows(args.d, args.k, grid)
        series = {"expected (exact)": ([r[0] for r in rows], [r[1] for r in rows]),
                  "naive (d)": ([r[0] for r in rows], [r[3] for r in rows])}
        top = max(max(r[1] for r in rows), args.d) * 1.05
        Path(args.svg).write_text(line_plot(series, title=f"d={args.d}, k={args.k}", xlabel="m",
                                            ylabel="queries", y_range=(0.0, top)))
    return 0


def cmd_ablation(args) -> int:
    cfg = _config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.sweep != "ratio":
        try:
            values = [float(v) for v in values]
        except ValueError as exc:
            raise ConfigError(f"bad sweep value: {exc}") from None
    model, ds, ids = _suite_inputs(cfg)
    reports = harness.ablation(cfg, args.sweep, values, model, ds.images[ids], ds.labels[ids], ids)
    _write(args.out, harness.ablation_csv(args.sweep, reports))
    return 0


def cmd_curve(args) -> int:
    series = {}
    first = None
    for spec in args.rows:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).parent.name or spec, spec
        try:
            rows = harness.read_rows_csv(Path(path).read_text())
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read rows from {path}: {exc}") from None
        n = args.n_queries or max([r.queries_used for r in rows] + [1])
        curve = harness.success_curve(rows, harness.default_grid(n))
        first = first or curve
        series[name] = ([q for q, _ in curve], [r for _, r in curve])
    _write(args.out, harness.curve_csv(first))
    if args.svg:
        from .plotting import line_plot
        Path(args.svg).write_text(line_plot(series, title=args.title))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparse-rs", description="Sparse random-search attacks on toy models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def settings(sp):
        sp.add_argument("settings", nargs="*", metavar="[CONFIG] [KEY=VALUE ...]",
                        help="config file followed by key=value overrides")

    t = sub.add_parser("train", help="train the default toy network")
    settings(t)
    t.add_argument("--out", required=True, help="weights file to write")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--save-test", help="also write the test split as a dataset directory")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="run an image-specific attack suite")
    settings(a)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--workers", type=int)
    a.add_argument("--traces", action="store_true", help="write one trace CSV per attacked image")
    a.set_defaults(func=cmd_attack)

    u = sub.add_parser("universal", help="optimise and evaluate a targeted universal patch or frame")
    settings(u)
    u.add_argument("--out", required=True, help="PPM/PGM file for the content (JSON sidecar alongside)")
    u.set_defaults(func=cmd_universal)

    th = sub.add_parser("theory", help="expected query counts of the top-k swap search")
    th.add_argument("--d", type=int, default=150528)
    th.add_argument("--k", type=int, default=150)
    th.add_argument("--m-grid", help="comma-separated m values")
    th.add_argument("--simulate", metavar="D,K,M", help="Monte-Carlo check instead of the table")
    th.add_argument("--trials", type=int, default=2000)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--out", default="-")
    th.add_argument("--svg")
    th.set_defaults(func=cmd_theory)

    ab = sub.add_parser("ablation", help="sweep alpha_init, a constant alpha or the patch ratio")
    settings(ab)
    ab.add_argument("--sweep", required=True, choices=harness.SWEEPS)
    ab.add_argument("--values", required=True, help="comma-separated; ratios as location:content")
    ab.add_argument("--out", default="-")
    ab.set_defaults(func=cmd_ablation)

    c = sub.add_parser("curve", help="success rate against queries from rows.csv files")
    c.add_argument("rows", nargs="+", metavar="[NAME=]ROWS_CSV")
    c.add_argument("--n-queries", type=int)
    c.add_argument("--out", default="-")
    c.add_argument("--svg")
    c.add_argument("--title", default="")
    c.set_defaults(func=cmd_curve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"sparse-rs: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
