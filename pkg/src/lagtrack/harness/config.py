"""Experiment configuration files: INI key/value sections, schema v1.

Sections:

    [experiment]   schema, method (l_learning|pid|exact_model), plant
                   (arm|quad), seed, output, optional plant_params file
    [trajectory]   kind + shape parameters (see trajectories module)
    [tracking]     gains for the sliding controller (l_learning/exact_model)
    [model]        network/scale constants (l_learning)
    [trainer]      outer-loop settings (l_learning)
    [pid]          fixed per-joint gains (pid)
    [tuner]        DE settings (tune-pid command)

Every validation problem is collected before raising, so one failed run
reports the full list.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..controller import ControllerGains, PidGains
from ..errors import ConfigError
from ..plants import ArmPlant, QuadAttitudePlant, load_arm_params, load_quad_params
from ..trainer import TrainerConfig
from ..trajectories import KINDS, TrajectoryConfig
from ..tuner import DeConfig, pid_bounds

__all__ = ["ExperimentConfig", "load_config", "default_config_text"]

SCHEMA_VERSION = 1
METHODS = ("l_learning", "pid", "exact_model")
PLANTS = ("arm", "quad")


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    method: str
    plant_name: str
    seed: int
    output: str | None
    plant_params_path: str | None
    trajectory: TrajectoryConfig
    gains: ControllerGains | None
    use_compensator: bool
    model_settings: dict
    trainer: TrainerConfig | None
    pid_gains_values: tuple | None  # (kp, ki, kd) tuples
    tuner: DeConfig | None
    tuner_metric: str
    source_text: str

    def make_plant(self):
        if self.plant_name == "arm":
            return ArmPlant(load_arm_params(self.plant_params_path)) if self.plant_params_path else ArmPlant()
        return QuadAttitudePlant(load_quad_params(self.plant_params_path)) if self.plant_params_path else QuadAttitudePlant()

    def make_pid_gains(self, plant) -> PidGains:
        kp, ki, kd = self.pid_gains_values
        return PidGains.with_default_clamp(np.asarray(kp), np.asarray(ki), np.asarray(kd), plant.torque_limit)


def _number(text: str) -> float:
    return float(Fraction(text)) if "/" in text else float(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_number(tok) for tok in text.replace(",", " ").split())


class _Collector:
    """Gathers section/key parse errors instead of failing fast."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.problems: list[str] = []

    def get(self, section: str, key: str, convert, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                self.problems.append(f"[{section}] missing required key {key!r}")
            return default
        raw = self.parser.get(section, key)
        try:
            return convert(raw)
        except (ValueError, ArithmeticError) as exc:
            self.problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            return default

    def require_section(self, name: str) -> bool:
        if not self.parser.has_section(name):
            self.problems.append(f"missing [{name}] section")
            return False
        return True


def load_config(path) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    text = path.read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from exc

    c = _Collector(parser)
    problems = c.problems

    method = plant_name = None
    seed = 0
    output = plant_params_path = None
    if c.require_section("experiment"):
        schema = c.get("experiment", "schema", int, default=None, required=True)
        if schema is not None and schema != SCHEMA_VERSION:
            problems.append(f"[experiment] schema {schema} unsupported (this build reads {SCHEMA_VERSION})")
        method = c.get("experiment", "method", str, required=True)
        if method is not None and method not in METHODS:
            problems.append(f"[experiment] method {method!r} not one of {METHODS}")
        plant_name = c.get("experiment", "plant", str, required=True)
        if plant_name is not None and plant_name not in PLANTS:
            problems.append(f"[experiment] plant {plant_name!r} not one of {PLANTS}")
        seed = c.get("experiment", "seed", int, default=0)
        output = c.get("experiment", "output", str)
        plant_params_path = c.get("experiment", "plant_params", str)
        if plant_params_path and not Path(plant_params_path).exists():
            problems.append(f"[experiment] plant_params file not found: {plant_params_path}")

    n = 2 if plant_name == "arm" else 3
    trajectory = None
    if c.require_section("trajectory"):
        kind = c.get("trajectory", "kind", str, required=True)
        if kind is not None and kind not in KINDS:
            problems.append(f"[trajectory] kind {kind!r} not one of {KINDS}")
        elif kind is not None:
            kwargs = dict(kind=kind, dof=n)
            for key, conv in (
                ("amplitude", _number),
                ("period", _number),
                ("phase", _floats),
                ("start", _floats),
                ("target", _floats),
                ("settle_time", _number),
                ("duration", _number),
                ("yaw_rate", _number),
            ):
                value = c.get("trajectory", key, conv)
                if value is not None:
                    kwargs[key] = value
            try:
                trajectory = TrajectoryConfig(**kwargs)
            except Exception as exc:
                problems.append(f"[trajectory] {exc}")

    gains = None
    use_compensator = True
    if method in ("l_learning", "exact_model"):
        if c.require_section("tracking"):
            slide = c.get("tracking", "slide_gain", _number, default=5.0)
            comp = c.get("tracking", "comp_weight", _number, default=10.0)
            damp = c.get("tracking", "damp_gain", _number, default=5.0)
            leak_rate = c.get("tracking", "leak_rate", _number, default=1.0)
            leak_tau = c.get("tracking", "leak_tau", _number, default=10.0)
            use_compensator = bool(c.get("tracking", "compensator", lambda s: s.lower() in ("1", "true", "yes"), default=True))
            try:
                gains = ControllerGains.diag(n, slide=slide, comp=comp, damp=damp, leak_rate=leak_rate, leak_tau=leak_tau)
            except Exception as exc:
                problems.append(f"[tracking] {exc}")

    model_settings: dict = {}
    if method == "l_learning" and parser.has_section("model"):
        hidden = c.get("model", "hidden", lambda s: tuple(int(tok) for tok in s.split()))
        if hidden is not None:
            model_settings["hidden"] = hidden
        for key in ("epsilon_pd", "diag_shift", "inertia_scale", "potential_scale"):
            value = c.get("model", key, _number)
            if value is not None:
                model_settings[key] = value
        activation = c.get("model", "activation", str)
        if activation is not None:
            model_settings["activation"] = activation

    trainer = None
    if method == "l_learning":
        if c.require_section("trainer"):
            kwargs = {}
            for key, conv in (
                ("iterations", int),
                ("noise_std0", _number),
                ("stop_rmse", _number),
                ("episodes_per_iter", int),
                ("epochs_per_iter", int),
                ("batch_size", int),
                ("buffer_capacity", int),
                ("learning_rate", _number),
            ):
                value = c.get("trainer", key, conv)
                if value is not None:
                    kwargs[key] = value
            try:
                trainer = TrainerConfig(seed=seed, **kwargs)
            except Exception as exc:
                problems.append(f"[trainer] {exc}")

    pid_values = None
    if method == "pid":
        if c.require_section("pid"):
            kp = c.get("pid", "kp", _floats, required=True)
            ki = c.get("pid", "ki", _floats, default=(0.0,) * n)
            kd = c.get("pid", "kd", _floats, default=(0.0,) * n)
            for name, vec in (("kp", kp), ("ki", ki), ("kd", kd)):
                if vec is not None and len(vec) != n:
                    problems.append(f"[pid] {name} needs {n} entries, got {len(vec)}")
            if kp is not None:
                pid_values = (kp, ki, kd)

    tuner = None
    tuner_metric = "itae"
    tuner_kwargs: dict = {}
    if parser.has_section("tuner"):
        for key, conv in (("population", int), ("generations", int), ("weight", _number), ("crossover", _number)):
            value = c.get("tuner", key, conv)
            if value is not None:
                tuner_kwargs[key] = value
        tuner_metric = c.get("tuner", "metric", str, default="itae")
        if tuner_metric not in ("itae", "rmse"):
            problems.append(f"[tuner] metric {tuner_metric!r} must be itae or rmse")

    if problems:
        raise ConfigError(problems)

    if parser.has_section("tuner"):
        plant_probe = ArmPlant() if plant_name == "arm" else QuadAttitudePlant()
        tuner = DeConfig(bounds=pid_bounds(plant_probe), seed=seed, **tuner_kwargs)

    return ExperimentConfig(
        method=method,
        plant_name=plant_name,
        seed=seed,
        output=output,
        plant_params_path=plant_params_path,
        trajectory=trajectory,
        gains=gains,
        use_compensator=use_compensator,
        model_settings=model_settings,
        trainer=trainer,
        pid_gains_values=pid_values,
        tuner=tuner,
        tuner_metric=tuner_metric,
        source_text=text,
    )


def default_config_text(method: str = "l_learning", plant: str = "arm") -> str:
    """A ready-to-edit config with the package defaults filled in."""
    lines = [
        "[experiment]",
        f"schema = {SCHEMA_VERSION}",
        f"method = {method}",
        f"plant = {plant}",
        "seed = 0",
        "",
        "[trajectory]",
        "kind = sine" if plant == "arm" else "kind = sine_linear_yaw",
        "duration = 20.0",
        "",
    ]
    if method in ("l_learning", "exact_model"):
        lines += ["[tracking]", "slide_gain = 15.0", "damp_gain = 5.0", "comp_weight = 10.0", ""]
    if method == "l_learning":
        lines += ["[trainer]", "iterations = 10", "noise_std0 = 5.0", ""]
    if method == "pid":
        lines += ["[pid]", "kp = 100 100", "ki = 20 20", "kd = 8 8", ""]
    return "\n".join(lines)
