"""Outer training loop: noise-annealed collection, replay, batched model
fitting, controller regeneration, and tracking-based early stopping.

Episodes run closed-loop at the control rate with zero-order hold.  Each
recorded transition stores the post-saturation torque actually applied and
the plant's true acceleration at application time, so every tuple
satisfies the plant's dynamics identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import delan
from .controller import (
    ControllerGains,
    TrackingController,
    lyapunov_eval,
    model_error,
)
from .delan import LearnedModel, Transition, TransitionBatch
from .errors import (
    GimbalProximityError,
    RejectedInputError,
    SimulationBlowUpError,
    TrainingDivergenceError,
)
from .harness.metrics import itae as itae_metric
from .harness.metrics import rmse as rmse_metric
from .harness.telemetry import Telemetry
from .plants import PlantState, forward_accel, step
from .trajectories import TrajectoryConfig, sample

__all__ = [
    "TrainerConfig",
    "ReplayBuffer",
    "noise_std",
    "perturb_control",
    "RolloutResult",
    "rollout",
    "collect_episode",
    "EvalResult",
    "evaluate_tracking",
    "IterationRecord",
    "TrainingResult",
    "l_learning",
    "initial_state",
]


@dataclass(frozen=True)
class TrainerConfig:
    """Outer-loop settings; defaults size the arm's 10k-transition budget."""

    iterations: int = 10  # K
    noise_std0: float = 5.0  # I0, N m
    stop_rmse: float = 0.0  # E_min; 0 disables early stopping
    episodes_per_iter: int = 1
    epochs_per_iter: int = 20
    batch_size: int = 256
    buffer_capacity: int = 100_000
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise RejectedInputError("iterations must be >= 1")
        if self.noise_std0 < 0:
            raise RejectedInputError("noise_std0 must be >= 0")
        if self.buffer_capacity < self.batch_size:
            raise RejectedInputError("buffer_capacity must be >= batch_size")


def noise_std(i0: float, k: int, total: int) -> float:
    """Annealed exploration noise I_k = I0 (1 - k/total), floored at zero."""
    if not 1 <= k <= total:
        raise RejectedInputError(f"iteration k={k} outside 1..{total}")
    return max(0.0, i0 * (1.0 - k / total))


def perturb_control(u, std: float, rng: np.random.Generator):
    """Add seeded Gaussian exploration noise; the caller saturates afterwards."""
    if std < 0:
        raise RejectedInputError("noise std must be >= 0")
    u = np.asarray(u, dtype=np.float64)
    if std == 0.0:
        return u
    return u + rng.normal(0.0, std, size=u.shape)


class ReplayBuffer:
    """Bounded FIFO of transitions stored column-wise."""

    def __init__(self, capacity: int, n: int):
        if capacity < 1:
            raise RejectedInputError("capacity must be >= 1")
        self.capacity = capacity
        self._cols = {name: np.empty((capacity, n)) for name in ("q", "qd", "qdd", "u")}
        self._start = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def extend(self, batch) -> None:
        batch = batch if isinstance(batch, TransitionBatch) else TransitionBatch.from_transitions(list(batch))
        for i in range(len(batch)):
            if self._size == self.capacity:
                pos = self._start  # overwrite and evict the oldest
                self._start = (self._start + 1) % self.capacity
            else:
                pos = (self._start + self._size) % self.capacity
                self._size += 1
            for name in self._cols:
                self._cols[name][pos] = getattr(batch, name)[i]

    def _order(self) -> np.ndarray:
        return (self._start + np.arange(self._size)) % self.capacity

    def transitions(self) -> list[Transition]:
        """Contents oldest-first."""
        order = self._order()
        return [
            Transition(self._cols["q"][i], self._cols["qd"][i], self._cols["qdd"][i], self._cols["u"][i])
            for i in order
        ]

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform sample without replacement within the batch."""
        if self._size == 0:
            raise RejectedInputError("cannot sample from an empty buffer")
        if batch_size > self._size:
            raise RejectedInputError(f"batch_size {batch_size} exceeds buffer size {self._size}")
        picks = self._order()[rng.choice(self._size, size=batch_size, replace=False)]
        return TransitionBatch(
            self._cols["q"][picks].copy(),
            self._cols["qd"][picks].copy(),
            self._cols["qdd"][picks].copy(),
            self._cols["u"][picks].copy(),
        )


# ---- closed-loop rollouts ------------------------------------------------------


@dataclass
class RolloutResult:
    transitions: TransitionBatch
    telemetry: Telemetry
    diverged: bool = False
    divergence_step: int | None = None


def initial_state(traj: TrajectoryConfig) -> PlantState:
    """Start on the reference (zero initial tracking error)."""
    ref = sample(traj, 0.0)
    return PlantState(ref.q_d.copy(), ref.qd_d.copy(), 0.0)


def rollout(
    plant,
    controller,
    traj: TrajectoryConfig,
    *,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
    start: PlantState | None = None,
) -> RolloutResult:
    """Run one episode at the control rate, recording transitions + telemetry.

    Divergence (non-finite state or gimbal proximity) truncates the episode
    and flags the result instead of raising.
    """
    if noise_std > 0 and rng is None:
        raise RejectedInputError("exploration noise requires an rng")
    controller.reset()
    state = start if start is not None else initial_state(traj)
    n = plant.n
    n_steps = int(round(traj.duration / plant.params.dt_ctrl))
    gains = getattr(controller, "gains", None)
    is_tracking = isinstance(controller, TrackingController)

    rows = {key: [] for key in ("t", "q", "q_des", "err", "u", "s", "d_hat", "v", "vdot_pred", "sat")}
    trans = {key: [] for key in ("q", "qd", "qdd", "u")}
    diverged = False
    divergence_step = None

    for k in range(n_steps):
        ref = sample(traj, state.t)
        try:
            u_cmd, tel = controller.command(state, ref)
        except GimbalProximityError:
            diverged, divergence_step = True, k
            break
        u_pre = perturb_control(u_cmd, noise_std, rng) if noise_std > 0 else u_cmd
        u_applied = np.clip(u_pre, -plant.torque_limit, plant.torque_limit)
        clipped = bool(np.any(u_applied != u_pre))

        try:
            true_triple = plant.dynamics(state.q, state.qd)
        except GimbalProximityError:
            diverged, divergence_step = True, k
            break
        qdd = forward_accel(true_triple, state.qd, u_applied)

        trans["q"].append(state.q.copy())
        trans["qd"].append(state.qd.copy())
        trans["qdd"].append(qdd)
        trans["u"].append(u_applied.copy())

        rows["t"].append(state.t)
        rows["q"].append(state.q.copy())
        rows["q_des"].append(ref.q_d.copy())
        rows["err"].append(float(np.linalg.norm(ref.q_d - state.q)))
        rows["u"].append(u_applied.copy())
        if is_tracking and tel is not None:
            d_true = model_error(true_triple, tel.est, state.qd, qdd)
            z = tel.d_hat - d_true
            rec = lyapunov_eval(tel.est.d, gains, tel.sliding.s, z, t=state.t)
            rows["s"].append(tel.sliding.s.copy())
            rows["d_hat"].append(tel.d_hat.copy())
            rows["v"].append(rec.v)
            rows["vdot_pred"].append(rec.vdot_predicted)
            rows["sat"].append(1.0 if (tel.saturated or clipped) else 0.0)
        else:
            rows["s"].append(np.full(n, np.nan))
            rows["d_hat"].append(np.full(n, np.nan))
            rows["v"].append(np.nan)
            rows["vdot_pred"].append(np.nan)
            rows["sat"].append(1.0 if clipped else 0.0)

        try:
            state = step(plant, state, u_applied)
        except (SimulationBlowUpError, GimbalProximityError) as exc:
            diverged = True
            divergence_step = getattr(exc, "step_index", None) or k
            break

    count = len(rows["t"])
    v_arr = np.asarray(rows["v"], dtype=float) if count else np.zeros(0)
    vdot_meas = np.full(count, np.nan)
    if count > 1:
        vdot_meas[1:] = np.diff(v_arr) / plant.params.dt_ctrl
    telemetry = Telemetry(
        t=np.asarray(rows["t"], dtype=float),
        q=np.asarray(rows["q"], dtype=float).reshape(count, n),
        q_des=np.asarray(rows["q_des"], dtype=float).reshape(count, n),
        err=np.asarray(rows["err"], dtype=float),
        u=np.asarray(rows["u"], dtype=float).reshape(count, n),
        s=np.asarray(rows["s"], dtype=float).reshape(count, n),
        d_hat=np.asarray(rows["d_hat"], dtype=float).reshape(count, n),
        v=v_arr,
        vdot_pred=np.asarray(rows["vdot_pred"], dtype=float),
        vdot_meas=vdot_meas,
        sat=np.asarray(rows["sat"], dtype=float),
    )
    transitions = TransitionBatch(
        np.asarray(trans["q"], dtype=float).reshape(count, n),
        np.asarray(trans["qd"], dtype=float).reshape(count, n),
        np.asarray(trans["qdd"], dtype=float).reshape(count, n),
        np.asarray(trans["u"], dtype=float).reshape(count, n),
    )
    return RolloutResult(transitions, telemetry, diverged, divergence_step)


def collect_episode(plant, controller, traj, noise_std: float, rng: np.random.Generator) -> RolloutResult:
    """One exploration episode under perturbed control."""
    return rollout(plant, controller, traj, noise_std=noise_std, rng=rng)


@dataclass
class EvalResult:
    rmse: float
    itae: float
    telemetry: Telemetry
    diverged: bool


def evaluate_tracking(plant, controller, traj) -> EvalResult:
    """Noiseless rollout scored with the harness metrics; inf on divergence."""
    result = rollout(plant, controller, traj, noise_std=0.0)
    if result.diverged or len(result.telemetry) == 0:
        return EvalResult(np.inf, np.inf, result.telemetry, True)
    dt = plant.params.dt_ctrl
    return EvalResult(
        rmse=rmse_metric(result.telemetry.err, dt),
        itae=itae_metric(result.telemetry.err, dt),
        telemetry=result.telemetry,
        diverged=False,
    )


# ---- the outer loop --------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    k: int
    noise_std: float
    new_transitions: int
    buffer_size: int
    batches: int
    loss_first: float
    loss_last: float
    loss_mean: float
    eval_rmse: float
    eval_itae: float
    seconds: float
    diverged_episodes: int = 0


@dataclass
class TrainingResult:
    model: LearnedModel
    gains: ControllerGains
    history: list[IterationRecord]
    best_k: int
    best_rmse: float
    stopped_early: bool
    samples_collected: int
    train_seconds: float
    # bounding box (q_lo, q_hi, qd_lo, qd_hi) of every state the trainer saw
    state_box: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None


def l_learning(
    config: TrainerConfig,
    plant,
    traj: TrajectoryConfig,
    *,
    gains: ControllerGains | None = None,
    model: LearnedModel | None = None,
    use_compensator: bool = True,
    on_iteration=None,
) -> TrainingResult:
    """Noise-annealed model learning with per-iteration controller regeneration.

    Each iteration: anneal the exploration noise, collect episodes with the
    current (perturbed) controller, merge into the replay buffer, run
    ``epochs_per_iter`` passes of batched gradient steps, rebuild the
    controller from the refreshed model, and evaluate tracking.  Stops as
    soon as the evaluation RMSE drops below ``stop_rmse``; otherwise the
    best-scoring model is returned after all iterations.
    """
    rng = np.random.default_rng(config.seed)
    init_rng, noise_rng, sample_rng = rng.spawn(3)

    if model is None:
        model = delan.make_model(plant.n, seed=int(init_rng.integers(2**31)))
    gains = gains or ControllerGains.diag(plant.n)
    opt_state = delan.optimizer_for(model, learning_rate=config.learning_rate)
    buffer = ReplayBuffer(config.buffer_capacity, plant.n)

    def controller_for(current_model: LearnedModel) -> TrackingController:
        return TrackingController(
            delan.estimator(current_model),
            gains,
            plant.n,
            plant.params.dt_ctrl,
            torque_limit=plant.torque_limit,
            use_compensator=use_compensator,
        )

    history: list[IterationRecord] = []
    best_model, best_rmse, best_k = model, np.inf, 0
    samples = 0
    stopped = False
    t_start = time.perf_counter()

    for k in range(1, config.iterations + 1):
        t_iter = time.perf_counter()
        std = noise_std(config.noise_std0, k, config.iterations)
        controller = controller_for(model)

        new_count = 0
        diverged_episodes = 0
        for _ in range(config.episodes_per_iter):
            episode = collect_episode(plant, controller, traj, std, noise_rng)
            diverged_episodes += int(episode.diverged)
            if len(episode.transitions):
                buffer.extend(episode.transitions)
                new_count += len(episode.transitions)
        samples += new_count
        if len(buffer) == 0:
            continue  # every episode diverged immediately

        batch_size = min(config.batch_size, len(buffer))
        batches_per_epoch = max(1, int(np.ceil(len(buffer) / batch_size)))
        losses = []
        for _ in range(config.epochs_per_iter):
            for _ in range(batches_per_epoch):
                batch = buffer.sample(batch_size, sample_rng)
                try:
                    model, opt_state, loss = delan.train_step(model, batch, opt_state)
                except TrainingDivergenceError as exc:
                    raise TrainingDivergenceError(
                        f"training diverged at iteration {k} after {len(losses)} batches"
                    ) from exc
                losses.append(loss)

        evaluation = evaluate_tracking(plant, controller_for(model), traj)
        record = IterationRecord(
            k=k,
            noise_std=std,
            new_transitions=new_count,
            buffer_size=len(buffer),
            batches=len(losses),
            loss_first=losses[0] if losses else np.nan,
            loss_last=losses[-1] if losses else np.nan,
            loss_mean=float(np.mean(losses)) if losses else np.nan,
            eval_rmse=evaluation.rmse,
            eval_itae=evaluation.itae,
            seconds=time.perf_counter() - t_iter,
            diverged_episodes=diverged_episodes,
        )
        history.append(record)
        if on_iteration is not None:
            on_iteration(record, model)

        if evaluation.rmse < best_rmse:
            best_model, best_rmse, best_k = model, evaluation.rmse, k
        if evaluation.rmse < config.stop_rmse:
            # the loop's break condition selects this iteration's controller
            best_model, best_rmse, best_k = model, evaluation.rmse, k
            stopped = True
            break

    box = None
    if len(buffer):
        seen = TransitionBatch.from_transitions(buffer.transitions())
        box = (seen.q.min(axis=0), seen.q.max(axis=0), seen.qd.min(axis=0), seen.qd.max(axis=0))
    return TrainingResult(
        model=best_model,
        gains=gains,
        history=history,
        best_k=best_k,
        best_rmse=best_rmse,
        stopped_early=stopped,
        samples_collected=samples,
        train_seconds=time.perf_counter() - t_start,
        state_box=box,
    )
