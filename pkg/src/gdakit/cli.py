"""Command-line front end.

Subcommands: shift, train, grid, eval, synth. Exit codes are a stable
contract for automation: 0 success, 2 input or config error, 3 diverged run.
All output files go through write-to-temp-then-rename, so an interrupted
command never leaves a partial artifact.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import (load_json, parse_experiment, parse_grid, parse_synth,
                     experiment_to_dict)
from .csbm import gen_csbm
from .errors import ConfigError, DivergedRunError, GdaError
from .graph import DomainPair, atomic_write_text, load_graph, save_graph
from .shift import shift_report
from .snapshot import load_model, save_model
from .trainer import config_id_for, evaluate, grid_search, train

CSV_COLUMNS = ("config_id", "task", "seed", "micro_f1", "macro_f1", "auroc",
               "runtime_s")


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def _task_name(source_dir: str, target_dir: str) -> str:
    src = os.path.basename(os.path.normpath(source_dir))
    tgt = os.path.basename(os.path.normpath(target_dir))
    return f"{src}->{tgt}"


def _write_csv(path: str, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _load_pair(source_dir: str, target_dir: str) -> DomainPair:
    return DomainPair.make(load_graph(source_dir), load_graph(target_dir))


def cmd_shift(args) -> int:
    pair = _load_pair(args.source, args.target)
    report = shift_report(pair)
    atomic_write_text(args.out, report.to_json())
    print(f"feature={report.feature_shift:.6f} label={report.label_shift:.6f} "
          f"structure={report.structure_shift:.6f}")
    return 0


def cmd_train(args) -> int:
    cfg = parse_experiment(load_json(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    pair = _load_pair(args.source, args.target)
    task = _task_name(args.source, args.target)
    config_id = config_id_for(experiment_to_dict(cfg))

    rows = []
    first_model = None
    diverged = False
    for i in range(cfg.repeats):
        run_cfg = replace(cfg, seed=cfg.seed + i)
        try:
            model, result = train(pair, run_cfg)
        except DivergedRunError as e:
            # Flagged row: a run that blew up keeps its seed in the CSV with
            # every metric column empty.
            print(f"seed {run_cfg.seed}: {e}", file=sys.stderr)
            rows.append((config_id, task, str(run_cfg.seed), "", "", "", ""))
            diverged = True
            continue
        if first_model is None:
            first_model = model
        m = result.metrics
        rows.append((config_id, task, str(run_cfg.seed), _fmt(m.micro_f1),
                     _fmt(m.macro_f1), _fmt(m.auroc), ""))
        print(f"seed {run_cfg.seed}: micro_f1={m.micro_f1:.4f} "
              f"macro_f1={m.macro_f1:.4f} ({result.runtime_seconds:.1f}s)")

    _write_csv(args.out, CSV_COLUMNS, rows)
    print(f"wrote {args.out}")
    if first_model is not None:
        params_path = os.path.splitext(args.out)[0] + ".params"
        save_model(first_model, params_path)
        print(f"wrote {params_path}")
    return 3 if diverged else 0


def _resolve_jobs(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("GDA_JOBS")
        if env is None:
            return 1
        try:
            arg = int(env)
        except ValueError:
            raise ConfigError(f"GDA_JOBS must be an integer, got {env!r}") from None
    if arg < 1:
        raise ConfigError("jobs must be positive")
    return arg


GRID_COLUMNS = ("config_id", "task", "overrides", "seeds",
                "micro_f1_mean", "micro_f1_std", "macro_f1_mean", "macro_f1_std",
                "auroc_mean", "auroc_std", "failures")


def cmd_grid(args) -> int:
    base, grid, seeds, metric = parse_grid(load_json(args.config))
    jobs = _resolve_jobs(args.jobs)
    pair = _load_pair(args.source, args.target)
    task = _task_name(args.source, args.target)

    cells = grid_search(pair, base, grid, seeds, primary_metric=metric, jobs=jobs)
    rows = []
    for cell in cells:
        stats = []
        for name in ("micro_f1", "macro_f1", "auroc"):
            mean, std = cell.mean_std(name)
            stats.extend([_fmt(mean), _fmt(std)])
        rows.append((cell.config_id, task,
                     json.dumps(cell.overrides, sort_keys=True, separators=(",", ":")),
                     " ".join(str(s) for s in seeds),
                     *stats, str(len(cell.failures))))
    _write_csv(args.out, GRID_COLUMNS, rows)
    print(f"wrote {args.out} ({len(cells)} cells, ranked by {metric})")
    best = cells[0]
    mean, std = best.mean_std(metric)
    if mean is not None:
        print(f"best: {best.overrides} {metric}={mean:.4f}±{std:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.params)
    g = load_graph(args.target)
    metrics = evaluate(model.encoder, g, g.labels)
    line = f"micro_f1={metrics.micro_f1:.4f} macro_f1={metrics.macro_f1:.4f}"
    if metrics.auroc is not None:
        line += f" auroc={metrics.auroc:.4f}"
    print(line)
    if args.out:
        payload = {"micro_f1": round(metrics.micro_f1, 4),
                   "macro_f1": round(metrics.macro_f1, 4),
                   "auroc": None if metrics.auroc is None else round(metrics.auroc, 4)}
        atomic_write_text(args.out, json.dumps(payload, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_synth(args) -> int:
    src_cfg, tgt_cfg = parse_synth(load_json(args.config))
    fallback = args.seed if args.seed is not None else 0
    graphs = {}
    for name, raw in (("source", src_cfg), ("target", tgt_cfg)):
        kwargs = dict(raw)
        kwargs.setdefault("seed", fallback)
        kwargs["class_means"] = np.asarray(kwargs["class_means"], dtype=np.float64)
        if "class_priors" in kwargs:
            kwargs["class_priors"] = np.asarray(kwargs["class_priors"], dtype=np.float64)
        graphs[name] = gen_csbm(**kwargs)
        out_dir = os.path.join(args.out, name)
        save_graph(graphs[name], out_dir)
        print(f"wrote {out_dir} ({graphs[name].n} nodes)")
    pair = DomainPair.make(graphs["source"], graphs["target"])
    sys.stdout.write(shift_report(pair).to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gda",
        description="Graph domain adaptation: shift diagnostics, training, "
                    "grid search, and synthetic benchmarks.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("shift", help="measure domain shift between two datasets")
    p.add_argument("--source", required=True, help="source dataset directory")
    p.add_argument("--target", required=True, help="target dataset directory")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("train", help="train on source, evaluate on target")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid search over config overrides")
    p.add_argument("--config", required=True, help="grid config JSON")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="ranked CSV path")
    p.add_argument("--jobs", type=int, help="parallel workers (or GDA_JOBS)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a parameter snapshot on a dataset")
    p.add_argument("--params", required=True, help="parameter snapshot path")
    p.add_argument("--target", required=True, help="labeled dataset directory")
    p.add_argument("--out", help="optional metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic source/target pair")
    p.add_argument("--config", required=True, help="generator settings JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="fallback seed for both domains")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergedRunError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (GdaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
