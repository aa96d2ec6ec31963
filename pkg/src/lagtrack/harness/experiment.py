"""End-to-end experiment execution and multi-run comparison tables.

Each run writes into its own output directory:

    telemetry.csv    per-step records of the final evaluation episode
    metrics.csv      one MetricReport row
    manifest.json    config copy, seed, package/library versions, timing
    history.csv      one row per training iteration (l_learning only)
    checkpoints/     per-iteration and final model checkpoints (l_learning)

Reruns with the same seed reproduce telemetry.csv byte for byte.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .. import __version__, delan
from ..controller import PidController, TrackingController
from ..errors import ConfigError
from ..trainer import TrainingResult, evaluate_tracking, l_learning
from .config import ExperimentConfig, load_config
from .metrics import MetricReport, itae, rmse
from .telemetry import Telemetry, write_telemetry

__all__ = ["run_experiment", "compare", "write_history", "ExperimentOutcome"]

HISTORY_FIELDS = [
    "k",
    "noise_std",
    "new_transitions",
    "buffer_size",
    "batches",
    "loss_first",
    "loss_last",
    "loss_mean",
    "eval_rmse",
    "eval_itae",
    "seconds",
    "diverged_episodes",
]


class ExperimentOutcome:
    """In-memory payload of one finished run (also persisted to out_dir)."""

    def __init__(self, out_dir: Path, report: MetricReport, telemetry: Telemetry, training: TrainingResult | None):
        self.out_dir = out_dir
        self.report = report
        self.telemetry = telemetry
        self.training = training


def _make_controller(config: ExperimentConfig, plant, model=None):
    if config.method == "pid":
        return PidController(config.make_pid_gains(plant), plant.n, plant.params.dt_ctrl, torque_limit=plant.torque_limit)
    estimator = plant.dynamics if config.method == "exact_model" else delan.estimator(model)
    return TrackingController(
        estimator,
        config.gains,
        plant.n,
        plant.params.dt_ctrl,
        torque_limit=plant.torque_limit,
        use_compensator=config.use_compensator,
    )


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for record in history:
            row = asdict(record)
            writer.writerow([repr(row[name]) if isinstance(row[name], float) else row[name] for name in HISTORY_FIELDS])


def run_experiment(config_path_or_obj, *, out_dir=None, seed=None, budget=None) -> ExperimentOutcome:
    """Execute one configured run and persist its artifacts.

    ``seed`` overrides the config seed; ``budget`` (l_learning only) rescales
    the iteration count to approximately that many collected transitions.
    """
    config = config_path_or_obj if isinstance(config_path_or_obj, ExperimentConfig) else load_config(config_path_or_obj)
    if seed is not None:
        config.seed = int(seed)
        if config.trainer is not None:
            config.trainer = type(config.trainer)(**{**asdict(config.trainer), "seed": int(seed)})

    plant = config.make_plant()
    traj = config.trajectory
    out = Path(out_dir) if out_dir is not None else Path(config.output or f"runs/{config.method}_{config.plant_name}_{traj.kind}")
    out.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()
    training: TrainingResult | None = None
    train_wall = 0.0

    if config.method == "l_learning":
        trainer_cfg = config.trainer
        if budget is not None:
            per_iter = trainer_cfg.episodes_per_iter * int(round(traj.duration / plant.params.dt_ctrl))
            iterations = max(1, int(round(budget / per_iter)))
            trainer_cfg = type(trainer_cfg)(**{**asdict(trainer_cfg), "iterations": iterations})
        model0 = delan.make_model(plant.n, seed=trainer_cfg.seed, **config.model_settings)
        training = l_learning(
            trainer_cfg, plant, traj, gains=config.gains, model=model0, use_compensator=config.use_compensator
        )
        train_wall = training.train_seconds
        controller = _make_controller(config, plant, model=training.model)

        ckpt_dir = out / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        delan.save_model(ckpt_dir / "final_model.ckpt", training.model, seed=trainer_cfg.seed)
        write_history(out / "history.csv", training.history)
    else:
        controller = _make_controller(config, plant)

    evaluation = evaluate_tracking(plant, controller, traj)
    report = MetricReport(
        rmse=evaluation.rmse,
        itae=evaluation.itae,
        samples_used=training.samples_collected if training else 0,
        wall_clock=train_wall,
        divergence_flag=evaluation.diverged,
    )

    write_telemetry(out / "telemetry.csv", evaluation.telemetry)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rmse", "itae", "samples_used", "wall_clock", "divergence_flag"])
        writer.writerow([repr(report.rmse), repr(report.itae), report.samples_used, repr(report.wall_clock), int(report.divergence_flag)])

    manifest = {
        "schema": 1,
        "method": config.method,
        "plant": config.plant_name,
        "trajectory_kind": traj.kind,
        "seed": config.seed,
        "budget_override": budget,
        "config_text": config.source_text,
        "versions": {
            "lagtrack": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "wall_clock_total": time.perf_counter() - t_start,
        "wall_clock_training": train_wall,
        "metrics": {"rmse": report.rmse, "itae": report.itae},
        "diverged": report.divergence_flag,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return ExperimentOutcome(out, report, evaluation.telemetry, training)


def _format_time(seconds: float) -> str:
    if seconds <= 0:
        return "-"
    minutes, secs = divmod(int(round(seconds)), 60)
    return f"{minutes:02d}min {secs:02d}s"


def compare(config_paths, *, out_dir="runs/comparison") -> tuple[Path, int]:
    """Run every config and emit the side-by-side table (CSV + text).

    Returns (table_path, exit_code); failed runs leave a gap marker in the
    table and make the exit code nonzero.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0
    for index, path in enumerate(config_paths):
        try:
            config = load_config(path)
            outcome = run_experiment(config, out_dir=out / f"run_{index:02d}_{Path(path).stem}")
            report = outcome.report
            rows.append(
                {
                    "Method": config.method,
                    "Trajectory": config.trajectory.kind,
                    "Samples": report.samples_used if report.samples_used else "-",
                    "RMSE": f"{report.rmse:.4f}",
                    "ITAE": f"{report.itae:.4f}",
                    "Time": _format_time(report.wall_clock),
                }
            )
        except (ConfigError, OSError) as exc:
            failures += 1
            rows.append(
                {
                    "Method": f"<failed: {Path(path).name}>",
                    "Trajectory": "-",
                    "Samples": "-",
                    "RMSE": "-",
                    "ITAE": "-",
                    "Time": "-",
                }
            )

    columns = ["Method", "Trajectory", "Samples", "RMSE", "ITAE", "Time"]
    table_path = out / "comparison.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in columns) for r in rows]
    text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(text)
    return table_path, (1 if failures else 0)
