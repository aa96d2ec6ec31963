"""Command-line interface.

Subcommands: train, evaluate, tune-pid, compare, plot.
Exit codes: 0 success, 2 configuration error, 3 simulation divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, LagtrackError
from .config import load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a model-learning experiment end to end")
    train.add_argument("--config", required=True, help="experiment config path")
    train.add_argument("--seed", type=int, default=None, help="override the config seed")
    train.add_argument("--out", default=None, help="output directory")
    train.add_argument("--budget", type=int, default=None, help="approximate transition budget")

    evaluate = sub.add_parser("evaluate", help="run a non-learning experiment (pid / exact_model)")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--seed", type=int, default=None)
    evaluate.add_argument("--out", default=None)

    tune = sub.add_parser("tune-pid", help="differential-evolution PID search")
    tune.add_argument("--config", required=True, help="config with [experiment]/[trajectory] (+ optional [tuner])")
    tune.add_argument("--seed", type=int, default=None)
    tune.add_argument("--out", default=None)

    comp = sub.add_parser("compare", help="run several configs and tabulate their metrics")
    comp.add_argument("--config", nargs="+", required=True, help="config paths")
    comp.add_argument("--out", default="runs/comparison")

    plot = sub.add_parser("plot", help="render SVG plots from a telemetry CSV")
    plot.add_argument("telemetry", help="telemetry.csv produced by a run")
    plot.add_argument("--out", default=None, help="output directory (default: alongside the CSV)")

    return parser


def _cmd_run(args) -> int:
    from .experiment import run_experiment

    outcome = run_experiment(args.config, out_dir=args.out, seed=args.seed, budget=getattr(args, "budget", None))
    report = outcome.report
    print(f"output: {outcome.out_dir}")
    print(f"rmse={report.rmse:.6f} itae={report.itae:.6f} samples={report.samples_used}")
    if report.divergence_flag:
        print("divergence encountered during evaluation", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def _cmd_tune(args) -> int:
    from ..tuner import DeConfig, pid_bounds, tune_pid

    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    plant = config.make_plant()
    de_cfg = config.tuner or DeConfig(bounds=pid_bounds(plant), seed=config.seed)
    gains, result = tune_pid(plant, config.trajectory, de_cfg, metric=config.tuner_metric)

    out = Path(args.out or f"runs/tune_pid_{config.plant_name}_{config.trajectory.kind}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "best_gains.json", "w") as fh:
        json.dump(
            {
                "kp": gains.kp.tolist(),
                "ki": gains.ki.tolist(),
                "kd": gains.kd.tolist(),
                "objective": config.tuner_metric,
                "value": result.value,
                "seed": de_cfg.seed,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    with open(out / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "best_value"])
        for g, v in enumerate(result.trace, start=1):
            writer.writerow([g, repr(v)])
    print(f"output: {out}")
    print(f"best {config.tuner_metric}={result.value:.6f}")
    print(f"kp={gains.kp.tolist()} ki={gains.ki.tolist()} kd={gains.kd.tolist()}")
    if not np.isfinite(result.value):
        print("all candidates diverged", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .experiment import compare

    table_path, code = compare(args.config, out_dir=args.out)
    print((Path(args.out) / "comparison.txt").read_text(), end="")
    print(f"table: {table_path}")
    return code


def _cmd_plot(args) -> int:
    from .plotting import plot_telemetry

    for path in plot_telemetry(args.telemetry, out_dir=args.out):
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command in ("train", "evaluate"):
            return _cmd_run(args)
        if args.command == "tune-pid":
            return _cmd_tune(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LagtrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
