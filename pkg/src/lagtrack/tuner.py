"""Differential-evolution search for PID gains (rand/1/bin variant).

Candidate loss is the time-weighted absolute tracking error of one
noiseless closed-loop episode (RMSE available behind a switch); diverging
rollouts score +inf and lose the greedy selection.  Whole populations are
simulated in one vectorized rollout, so evaluation order cannot affect the
outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import PidGains
from .errors import RejectedInputError
from .plants import ArmPlant
from .trajectories import TrajectoryConfig, sample

__all__ = [
    "DeConfig",
    "DeResult",
    "de_optimize",
    "pid_bounds",
    "params_to_pid",
    "pid_objective",
    "tune_pid",
]


@dataclass(frozen=True)
class DeConfig:
    """rand/1/bin settings and the per-parameter search box."""

    bounds: tuple[tuple[float, float], ...]
    population: int = 20
    generations: int = 60
    weight: float = 0.7  # differential weight applied to the donor difference
    crossover: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise RejectedInputError("population must be >= 4 for rand/1 donors")
        if not 0.0 < self.weight <= 2.0:
            raise RejectedInputError("weight must lie in (0, 2]")
        if not 0.0 <= self.crossover <= 1.0:
            raise RejectedInputError("crossover must lie in [0, 1]")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if any(lo >= hi for lo, hi in bounds):
            raise RejectedInputError("each bound must satisfy lo < hi")


@dataclass
class DeResult:
    best: np.ndarray
    value: float
    trace: list[float]  # best objective after each generation
    evaluations: int


def _evaluate(objective, pop: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        values = np.asarray(objective(pop), dtype=float)
    else:
        values = np.array([float(objective(member)) for member in pop])
    return np.where(np.isfinite(values), values, np.inf)


def de_optimize(objective, cfg: DeConfig, *, vectorized: bool = False) -> DeResult:
    """Greedy rand/1/bin evolution within the bounds box.

    ``objective`` maps a parameter vector to a scalar; with
    ``vectorized=True`` it must accept a (population, dim) array and
    return (population,) values.
    """
    rng = np.random.default_rng(cfg.seed)
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    dim = lo.size

    pop = rng.uniform(lo, hi, size=(cfg.population, dim))
    values = _evaluate(objective, pop, vectorized)
    evaluations = cfg.population
    trace = []

    for _ in range(cfg.generations):
        trials = np.empty_like(pop)
        for i in range(cfg.population):
            choices = np.array([j for j in range(cfg.population) if j != i])
            a, b, c = pop[choices[rng.choice(choices.size, size=3, replace=False)]]
            mutant = np.clip(a + cfg.weight * (b - c), lo, hi)
            cross = rng.random(dim) < cfg.crossover
            cross[rng.integers(dim)] = True  # forced index keeps trial != parent
            trials[i] = np.where(cross, mutant, pop[i])
        trial_values = _evaluate(objective, trials, vectorized)
        evaluations += cfg.population
        better = trial_values <= values
        pop[better] = trials[better]
        values[better] = trial_values[better]
        trace.append(float(values.min()))

    best_idx = int(np.argmin(values))
    return DeResult(best=pop[best_idx].copy(), value=float(values[best_idx]), trace=trace, evaluations=evaluations)


# ---- PID tuning ------------------------------------------------------------------


def pid_bounds(plant) -> tuple[tuple[float, float], ...]:
    """Per-joint (kp, ki, kd) boxes; torque scale follows the plant's inertia."""
    # unit-scale boxes suit the arm; the quad's are shrunk by its inertia
    scale = 1.0 if isinstance(plant, ArmPlant) else float(np.mean(plant.params.j_diag))
    per_joint = ((0.0, 200.0 * scale), (0.0, 100.0 * scale), (0.0, 50.0 * scale))
    return per_joint * plant.n


def params_to_pid(params, plant) -> PidGains:
    """Flat (kp_i, ki_i, kd_i) triples per joint -> PidGains with anti-windup."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (3 * plant.n,):
        raise RejectedInputError(f"expected {3 * plant.n} gain parameters, got {params.shape}")
    trip = params.reshape(plant.n, 3)
    return PidGains.with_default_clamp(trip[:, 0], trip[:, 1], trip[:, 2], plant.torque_limit)


def _batched_pid_rollout(plant, traj: TrajectoryConfig, pop: np.ndarray) -> np.ndarray:
    """ITAE and RMSE of every candidate, simulated simultaneously.

    pop is (P, 3n); returns (P, 2) with [itae, rmse]; diverged rows are inf.
    """
    p = plant.params
    n = plant.n
    pop_n = pop.shape[0]
    trip = pop.reshape(pop_n, n, 3)
    kp, ki, kd = trip[..., 0], trip[..., 1], trip[..., 2]
    clamp = np.where(ki > 0, 10.0 * plant.torque_limit / np.maximum(ki, 1e-12), np.inf)
    limit = plant.torque_limit

    n_steps = int(round(traj.duration / p.dt_ctrl))
    n_sub = int(round(p.dt_ctrl / p.dt_sim))
    h = p.dt_sim

    ref0 = sample(traj, 0.0)
    q = np.tile(ref0.q_d, (pop_n, 1))
    qd = np.tile(ref0.qd_d, (pop_n, 1))
    integral = np.zeros((pop_n, n))
    alive = np.ones(pop_n, dtype=bool)
    itae_acc = np.zeros(pop_n)
    sq_acc = np.zeros(pop_n)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            t = k * p.dt_ctrl
            ref = sample(traj, t)
            err = ref.q_d - q
            derr = ref.qd_d - qd
            integral = np.clip(integral + err * p.dt_ctrl, -clamp, clamp)
            u = np.clip(kp * err + ki * integral + kd * derr, -limit, limit)

            e_norm = np.linalg.norm(err, axis=1)
            itae_acc += (t + 0.5 * p.dt_ctrl) * e_norm * p.dt_ctrl
            sq_acc += e_norm**2

            for _ in range(n_sub):
                k1q, k1v = _batch_deriv(plant, q, qd, u)
                k2q, k2v = _batch_deriv(plant, q + 0.5 * h * k1q, qd + 0.5 * h * k1v, u)
                k3q, k3v = _batch_deriv(plant, q + 0.5 * h * k2q, qd + 0.5 * h * k2v, u)
                k4q, k4v = _batch_deriv(plant, q + h * k3q, qd + h * k3v, u)
                q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
                qd = qd + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)

            bad = ~np.all(np.isfinite(q), axis=1) | ~np.all(np.isfinite(qd), axis=1)
            bad |= np.max(np.abs(qd), axis=1) > 1e6
            if plant.n == 3:
                bad |= np.abs(q[:, 1]) >= np.pi / 2 - 0.1
            if np.any(bad & alive):
                alive &= ~bad
                q[bad] = 0.0
                qd[bad] = 0.0  # park dead members on a finite state

    itae_out = np.where(alive, itae_acc, np.inf)
    rmse_out = np.where(alive, np.sqrt(sq_acc / n_steps), np.inf)
    return np.stack([itae_out, rmse_out], axis=1)


def _batch_deriv(plant, q, qd, u):
    d, c, g = plant._dcg(q, qd)
    rhs = u - np.einsum("...ij,...j->...i", c, qd) - g
    return qd, np.linalg.solve(d, rhs[..., None])[..., 0]


def pid_objective(plant, traj: TrajectoryConfig, metric: str = "itae"):
    """Vectorized candidate scorer for de_optimize (diverged -> +inf)."""
    if metric not in ("itae", "rmse"):
        raise RejectedInputError("metric must be 'itae' or 'rmse'")
    col = 0 if metric == "itae" else 1

    def objective(pop: np.ndarray) -> np.ndarray:
        pop = np.atleast_2d(np.asarray(pop, dtype=np.float64))
        return _batched_pid_rollout(plant, traj, pop)[:, col]

    return objective


def tune_pid(plant, traj: TrajectoryConfig, cfg: DeConfig | None = None, metric: str = "itae"):
    """DE search over per-joint PID gains.  Returns (gains, DeResult)."""
    cfg = cfg or DeConfig(bounds=pid_bounds(plant))
    result = de_optimize(pid_objective(plant, traj, metric), cfg, vectorized=True)
    return params_to_pid(result.best, plant), result
