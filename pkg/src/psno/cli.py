"""``psno`` batch entry point: generate, train, eval, sweep, report.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import datagen, evaluation, plots, smib
from .config import ConfigError, defaults_text, load_config
from .datagen import DatasetError, DatasetSplits, build_dataset, load_dataset, save_dataset
from .numcore.checkpoint import CheckpointError
from .operators import KINDS, count_params, load_model, model_kind, within_budget
from .training import BudgetError, TrainingError, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _echo(msg: str) -> None:
    print(msg, flush=True)


def _split_files(prefix: str) -> dict:
    path = Path(prefix)
    return datagen.split_paths(path.parent, path.name)


def _load_split(path) -> datagen.Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing data file: {path}")
    return load_dataset(path)


def _summary(splits: DatasetSplits) -> dict:
    cfg = splits.train.config
    return {
        "config": cfg.to_dict(),
        "input_length": int(cfg.input_times().size),
        "target_length": int(cfg.target_times().size),
        "stats": splits.train.stats.to_dict() if splits.train.stats else None,
        "splits": {ds.split: {"records": len(ds), "unstable": ds.n_unstable(),
                              "stable": len(ds) - ds.n_unstable()} for ds in splits},
    }


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    overrides = dict(dt=args.dt, unstable_fraction=args.unstable_fraction,
                     n_train=args.n_train, n_val=args.n_val, n_test=args.n_test, seed=args.seed)
    try:
        sampling = cfg.sampling_config(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    splits = build_dataset(sampling, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = datagen.split_paths(out, args.stem)
    for ds in splits:
        save_dataset(ds, paths[ds.split])
    summary = _summary(splits)
    (out / f"{args.stem}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _echo(json.dumps({k: summary[k] for k in ("input_length", "target_length", "splits")},
                     sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    files = _split_files(args.data)
    splits = DatasetSplits(*(_load_split(files[s]) for s in datagen.SPLITS))
    tc = cfg.train_config(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                          allow_any_size=args.allow_any_size or None)
    model_config = cfg.model_overrides(args.model)
    n_params = count_params(args.model, model_config)
    _echo(f"parameters: {n_params}")
    if not tc.allow_any_size and not within_budget(n_params):
        raise UsageError(f"{args.model} has {n_params} parameters, outside 700000 +/- 10%; "
                         "pass --allow-any-size to override")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _, report = train(args.model, splits, tc, model_config=model_config, checkpoint_path=out,
                      log=_echo if args.verbose else None)
    report_path = Path(args.report) if args.report else out.with_suffix(".csv")
    report_path.write_text(report.to_csv())
    _echo(f"best validation loss: {report.best_val_loss!r} (epoch {report.best_epoch})")
    return EXIT_OK


def _group_models(paths) -> "OrderedDict[str, list]":
    groups = OrderedDict()
    for path in paths:
        if not Path(path).exists():
            raise FileNotFoundError(f"missing checkpoint: {path}")
        model, _ = load_model(path)
        groups.setdefault(model_kind(model), []).append(model)
    return groups


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    coarse = _load_split(args.coarse_test)
    fine = _load_split(args.fine_test)
    try:
        evaluation.check_resolution_pair(coarse, fine)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    models = _group_models(args.checkpoint or [])
    if args.oracle:
        models["oracle"] = [evaluation.OracleModel(coarse, fine)]
    if not models:
        raise UsageError("eval needs at least one --checkpoint or --oracle")
    report = evaluation.evaluate_superres(models, coarse, fine, cfg.evaluation.n_boot,
                                          cfg.seeds.bootstrap)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(report.to_csv())
    _echo(report.table())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    ev = cfg.evaluation
    sweep_cfg = evaluation.SweepConfig(pm=ev.sweep_pm, damping=ev.sweep_damping,
                                       points=args.points or ev.sweep_points)
    report = evaluation.regime_sweep(_group_models(args.mix0 or []),
                                     _group_models(args.mix20 or []), sweep_cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(report.to_csv())
    _echo(f"markers: pm={report.pm!r} threshold={report.threshold!r}")
    for kind in report.mase:
        parts = [f"{mix}={report.mean_unstable_mase(kind, mix):.4f}" for mix in report.mase[kind]]
        _echo(f"{kind}: mean unstable-region MASE " + " ".join(parts))
    return EXIT_OK


def _read_csv_rows(path):
    import csv

    lines = Path(path).read_text().splitlines()
    comments = [ln[1:].strip() for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    return comments, rows


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = ["# Benchmark summary", ""]
    if args.superres:
        _, rows = _read_csv_rows(args.superres)
        summary += ["| Model | dt=100ms (RMSE) | dt=50us (RMSE) | Percent Difference |",
                    "|---|---|---|---|"]
        for r in rows:
            summary.append(
                f"| {r['model']} | {float(r['coarse_rmse_mean']):.4f} ± {float(r['coarse_rmse_se']):.4f} "
                f"| {float(r['fine_rmse_mean']):.4f} ± {float(r['fine_rmse_se']):.4f} "
                f"| {float(r['pct_diff']):.1f} ({float(r['ci_low']):.1f}, {float(r['ci_high']):.1f}) |")
        summary.append("")
    if args.sweep:
        comments, rows = _read_csv_rows(args.sweep)
        markers = dict(c.split("=", 1) for c in comments if "=" in c)
        pm, threshold = float(markers["marker_pm"]), float(markers["marker_threshold"])
        kinds = OrderedDict()
        for r in rows:
            kinds.setdefault(r["model"], []).append(r)
        for kind, kr in kinds.items():
            pm1 = np.array([float(r["pm1"]) for r in kr])
            series = {}
            for mix, label in (("mase_mix0", "0% unstable"), ("mase_mix20", "20% unstable")):
                vals = np.array([float(r[mix]) if r[mix] else math.nan for r in kr])
                if np.any(np.isfinite(vals)):
                    series[label] = vals
            path = out / f"sweep_{kind}.svg"
            path.write_text(plots.sweep_svg(pm1, series, pm, threshold, f"{kind}: MASE vs Pm1"))
            written.append(path)
        summary += [f"Sweep markers: Pm = {pm}, instability threshold = {threshold:.6f}", ""]
    if args.checkpoint:
        if not args.test:
            raise UsageError("trajectory overlays need --test")
        test = _load_split(args.test)
        index = min(args.record, len(test) - 1)
        rec = test.records[index]
        cfg = test.config
        for path in args.checkpoint:
            if not Path(path).exists():
                raise FileNotFoundError(f"missing checkpoint: {path}")
            model, _ = load_model(path)
            stats = model.norm_stats
            x = datagen.normalize_channels(rec.input.delta, rec.input.omega, stats)[None]
            pred = model.predict(x, cfg.dt, cfg.target_times())[0]
            d, w = datagen.denormalize(pred, stats)
            svg = plots.trajectory_svg(
                rec.input.times, np.stack([rec.input.delta, rec.input.omega], -1),
                rec.target.times, np.stack([np.minimum(rec.target.delta, math.pi), rec.target.omega], -1),
                cfg.target_times(), np.stack([d, w], -1),
                f"{model_kind(model)} on test record {index} (dt = {cfg.dt:g} s)")
            target = out / f"trajectory_{model_kind(model)}_{Path(path).stem}.svg"
            target.write_text(svg)
            written.append(target)
    (out / "summary.md").write_text("\n".join(summary) + "\n")
    written.append(out / "summary.md")
    for path in written:
        _echo(str(path))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psno", description=__doc__, epilog=defaults_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample SMIB datasets (train/val/test)")
    g.add_argument("--config")
    g.add_argument("--dt", type=float)
    g.add_argument("--unstable-fraction", type=float)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-val", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--stem", default="dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one surrogate")
    t.add_argument("--config")
    t.add_argument("--model", required=True, choices=KINDS)
    t.add_argument("--data", required=True, help="dataset prefix, e.g. data/dataset")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--report", help="TrainReport CSV path (default: checkpoint with .csv)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--allow-any-size", action="store_true")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="zero-shot super-resolution scores")
    e.add_argument("--config")
    e.add_argument("--coarse-test", required=True)
    e.add_argument("--fine-test", required=True)
    e.add_argument("--checkpoint", action="append")
    e.add_argument("--oracle", action="store_true", help="add a stub that returns the targets")
    e.add_argument("--out", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="regime generalization sweep over Pm1")
    s.add_argument("--config")
    s.add_argument("--mix0", action="append", help="checkpoint trained without unstable data")
    s.add_argument("--mix20", action="append", help="checkpoint trained with 20%% unstable data")
    s.add_argument("--points", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="render SVG figures and a summary table")
    r.add_argument("--superres")
    r.add_argument("--sweep")
    r.add_argument("--checkpoint", action="append")
    r.add_argument("--test", help="test split used for trajectory overlays")
    r.add_argument("--record", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, BudgetError) as exc:
        print(f"psno: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetError, CheckpointError) as exc:
        print(f"psno: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (smib.IntegrationError, TrainingError, datagen.ConsistencyError,
            FloatingPointError) as exc:
        print(f"psno: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
