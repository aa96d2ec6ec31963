"""Structured energy model of an n-DOF system and its training loss.

Two networks parameterize the model: one maps coordinates q to the
n(n+1)/2 entries of a lower-triangular factor (softplus-positive
diagonal), giving a uniformly positive-definite inertia estimate
D = R R^T + epsilon_pd I; the other maps q to a scalar potential.  The
velocity-product matrix C and gravity vector G are extracted from first
derivatives of those network outputs: under this parameterization the
triple-derivative form of C collapses to the Christoffel symbols of D,
and the potential-based form of G collapses to dP/dq.  The literal
derivative forms are exercised by the test suite as oracles.

Training fits the composed torque D(q) qdd + C(q, qd) qd + G(q) to
recorded torques with a mean unsquared-Euclidean-norm residual loss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .diffcore import autodiff as ad
from .diffcore.checks import loss_param_gradient
from .diffcore.network import (
    NetworkSpec,
    ParameterVector,
    init_params,
    load_network,
    net_forward,
    net_forward_and_input_jacobian,
    save_network,
)
from .diffcore.optim import OptimizerState, adam_step
from .errors import DimensionMismatchError, RejectedInputError, TrainingDivergenceError

__all__ = [
    "LearnedModel",
    "DynamicsTriple",
    "Transition",
    "TransitionBatch",
    "make_model",
    "inertia_estimate",
    "inertia_time_derivative",
    "coriolis_estimate",
    "gravity_estimate",
    "potential_estimate",
    "lagrangian",
    "inverse_dynamics",
    "compose_torque",
    "dynamics_estimate",
    "estimator",
    "batch_loss",
    "train_step",
    "save_model",
    "load_model",
]


# ---- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class DynamicsTriple:
    """One evaluation of (inertia, velocity-product, gravity) at a state."""

    d: np.ndarray  # (n, n)
    c: np.ndarray  # (n, n)
    g: np.ndarray  # (n,)

    def __post_init__(self):
        n = self.g.shape[0]
        if self.d.shape != (n, n) or self.c.shape != (n, n):
            raise DimensionMismatchError(
                f"triple shapes inconsistent: D {self.d.shape}, C {self.c.shape}, G {self.g.shape}"
            )


@dataclass(frozen=True)
class Transition:
    """One recorded tuple (q, qd, qdd, u) of generalized state and force."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd", "qdd", "u"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise RejectedInputError(f"transition field {name} has non-finite entries")


@dataclass(frozen=True)
class TransitionBatch:
    """Column-stacked transitions; indexable like a sequence of Transition."""

    q: np.ndarray  # (B, n)
    qd: np.ndarray
    qdd: np.ndarray
    u: np.ndarray

    def __len__(self) -> int:
        return self.q.shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return TransitionBatch(self.q[index], self.qd[index], self.qdd[index], self.u[index])
        return Transition(self.q[index], self.qd[index], self.qdd[index], self.u[index])

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        return cls(
            np.stack([t.q for t in transitions]),
            np.stack([t.qd for t in transitions]),
            np.stack([t.qdd for t in transitions]),
            np.stack([t.u for t in transitions]),
        )


def _as_batch(batch) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    return TransitionBatch.from_transitions(list(batch))


@dataclass
class LearnedModel:
    """Networks and constants defining the learned dynamics.

    ``epsilon_pd`` lower-bounds the inertia eigenvalues; ``diag_shift``
    keeps the triangular factor's diagonal strictly positive after the
    softplus.  ``inertia_scale``/``potential_scale`` are fixed output
    scalings chosen per plant so that an untrained model already produces
    forces of the right order of magnitude (the architecture is otherwise
    scale-blind).
    """

    n: int
    inertia_spec: NetworkSpec
    inertia_params: ParameterVector
    potential_spec: NetworkSpec
    potential_params: ParameterVector
    epsilon_pd: float = 1e-3
    diag_shift: float = 1e-6
    inertia_scale: float = 1.0
    potential_scale: float = 1.0

    def __post_init__(self):
        m = self.n * (self.n + 1) // 2
        if self.inertia_spec.input_dim != self.n or self.inertia_spec.output_dim != m:
            raise DimensionMismatchError(
                f"inertia net must map {self.n} -> {m}, got "
                f"{self.inertia_spec.input_dim} -> {self.inertia_spec.output_dim}"
            )
        if self.potential_spec.input_dim != self.n or self.potential_spec.output_dim != 1:
            raise DimensionMismatchError("potential net must map n -> 1")
        if self.epsilon_pd <= 0:
            raise RejectedInputError("epsilon_pd must be > 0")


def make_model(
    n: int,
    hidden: tuple[int, ...] = (64, 64),
    activation: str = "softplus",
    seed: int = 0,
    epsilon_pd: float = 1e-3,
    diag_shift: float = 1e-6,
    inertia_scale: float = 1.0,
    potential_scale: float = 1.0,
) -> LearnedModel:
    """Freshly initialized model with seeded parameters."""
    rng = np.random.default_rng(seed)
    inertia_spec = NetworkSpec(n, n * (n + 1) // 2, hidden, activation)
    potential_spec = NetworkSpec(n, 1, hidden, activation)
    return LearnedModel(
        n=n,
        inertia_spec=inertia_spec,
        inertia_params=init_params(inertia_spec, rng),
        potential_spec=potential_spec,
        potential_params=init_params(potential_spec, rng),
        epsilon_pd=epsilon_pd,
        diag_shift=diag_shift,
        inertia_scale=inertia_scale,
        potential_scale=potential_scale,
    )


# ---- triangular assembly --------------------------------------------------------


@lru_cache(maxsize=None)
def _tril_maps(n: int):
    """Index bookkeeping for the row-major lower-triangular output layout.

    Returns (diag_positions, offdiag_positions, scatter_diag, scatter_off)
    where the scatter matrices place the diagonal/off-diagonal output
    entries into a flattened (n, n) matrix.
    """
    pairs = [(i, j) for i in range(n) for j in range(i + 1)]
    diag_pos = np.array([k for k, (i, j) in enumerate(pairs) if i == j])
    off_pos = np.array([k for k, (i, j) in enumerate(pairs) if i != j], dtype=int)
    scatter_diag = np.zeros((n * n, n))
    for col, k in enumerate(diag_pos):
        i, j = pairs[k]
        scatter_diag[i * n + j, col] = 1.0
    scatter_off = np.zeros((n * n, max(len(off_pos), 1)))
    for col, k in enumerate(off_pos):
        i, j = pairs[k]
        scatter_off[i * n + j, col] = 1.0
    return diag_pos, off_pos, scatter_diag, scatter_off


def _inertia_pieces(model: LearnedModel, q2):
    """Batched factor R, inertia D, and dD/dq from the inertia net.

    q2 has shape (B, n); works on arrays and tape Vars alike.  Returns
    (r, d, dd) with shapes (B, n, n), (B, n, n), (B, n, n, n) where
    dd[b, i, j, k] = dD_ij/dq_k.
    """
    n = model.n
    diag_pos, off_pos, scatter_diag, scatter_off = _tril_maps(n)
    batch = ad.value_of(q2).shape[0]
    y, jac = net_forward_and_input_jacobian(model.inertia_spec, model.inertia_params, q2)

    y_diag = y[:, diag_pos]
    r_diag = ad.softplus(y_diag) + model.diag_shift
    r_flat = r_diag @ scatter_diag.T
    jac_diag = jac[:, diag_pos, :]
    sig = ad.sigmoid(y_diag)  # d softplus
    jac_diag_scaled = sig.reshape((batch, n, 1)) * jac_diag
    dr_flat = scatter_diag @ jac_diag_scaled
    if len(off_pos):
        r_flat = r_flat + y[:, off_pos] @ scatter_off.T
        dr_flat = dr_flat + scatter_off @ jac[:, off_pos, :]

    r = r_flat.reshape((batch, n, n)) * model.inertia_scale
    dr = dr_flat.reshape((batch, n, n, n)) * model.inertia_scale

    d = r @ ad.swap_last(r) + model.epsilon_pd * np.eye(n)
    dd = ad.einsum("bilk,bjl->bijk", dr, r) + ad.einsum("bjlk,bil->bijk", dr, r)
    return r, d, dd


def _christoffel(dd, qd2):
    """C_ij = sum_k 0.5 (dD_ij/dq_k + dD_ik/dq_j - dD_jk/dq_i) qd_k."""
    t1 = ad.einsum("bijk,bk->bij", dd, qd2)
    t2 = ad.einsum("bikj,bk->bij", dd, qd2)
    t3 = ad.einsum("bjki,bk->bij", dd, qd2)
    return 0.5 * (t1 + t2 - t3)


def _gravity(model: LearnedModel, q2):
    _, jac = net_forward_and_input_jacobian(model.potential_spec, model.potential_params, q2)
    return jac[:, 0, :] * model.potential_scale


def _check_state(model: LearnedModel, *vecs) -> list[np.ndarray]:
    out = []
    for v in vecs:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (model.n,):
            raise DimensionMismatchError(f"expected shape ({model.n},), got {v.shape}")
        out.append(v)
    return out


# ---- single-state estimates -------------------------------------------------------


def inertia_estimate(model: LearnedModel, q) -> np.ndarray:
    """Symmetric positive-definite inertia estimate at q."""
    (q,) = _check_state(model, q)
    _, d, _ = _inertia_pieces(model, q[None, :])
    return ad.value_of(d)[0]


def inertia_time_derivative(model: LearnedModel, q, qd) -> np.ndarray:
    """dD/dt along qd, assembled as sum_k (dD/dq_k) qd_k."""
    q, qd = _check_state(model, q, qd)
    _, _, dd = _inertia_pieces(model, q[None, :])
    return np.einsum("ijk,k->ij", ad.value_of(dd)[0], qd)


def coriolis_estimate(model: LearnedModel, q, qd) -> np.ndarray:
    """Velocity-product matrix from the Christoffel symbols of the inertia estimate."""
    q, qd = _check_state(model, q, qd)
    _, _, dd = _inertia_pieces(model, q[None, :])
    return ad.value_of(_christoffel(dd, qd[None, :]))[0]


def gravity_estimate(model: LearnedModel, q) -> np.ndarray:
    """Gradient of the learned potential with respect to q."""
    (q,) = _check_state(model, q)
    return ad.value_of(_gravity(model, q[None, :]))[0]


def potential_estimate(model: LearnedModel, q) -> float:
    (q,) = _check_state(model, q)
    return float(net_forward(model.potential_spec, model.potential_params, q)[0]) * model.potential_scale


def lagrangian(model: LearnedModel, q, qd) -> float:
    """Kinetic minus potential energy of the learned model."""
    q, qd = _check_state(model, q, qd)
    d = inertia_estimate(model, q)
    return 0.5 * float(qd @ d @ qd) - potential_estimate(model, q)


def dynamics_estimate(model: LearnedModel, q, qd) -> DynamicsTriple:
    """All three learned matrices at one state, sharing the network passes."""
    q, qd = _check_state(model, q, qd)
    q2 = q[None, :]
    _, d, dd = _inertia_pieces(model, q2)
    c = _christoffel(dd, qd[None, :])
    g = _gravity(model, q2)
    return DynamicsTriple(ad.value_of(d)[0], ad.value_of(c)[0], ad.value_of(g)[0])


def estimator(model: LearnedModel):
    """(q, qd) -> DynamicsTriple closure, the controller-facing surface."""
    return lambda q, qd: dynamics_estimate(model, q, qd)


def compose_torque(triple: DynamicsTriple, qd, qdd) -> np.ndarray:
    """Generalized force D qdd + C qd + G for an already-evaluated triple."""
    return triple.d @ np.asarray(qdd, dtype=float) + triple.c @ np.asarray(qd, dtype=float) + triple.g


def inverse_dynamics(model: LearnedModel, q, qd, qdd) -> np.ndarray:
    """Force the learned model needs to realize qdd at (q, qd)."""
    q, qd, qdd = _check_state(model, q, qd, qdd)
    return compose_torque(dynamics_estimate(model, q, qd), qd, qdd)


# ---- batched loss and training -------------------------------------------------------


def _split_joint(model: LearnedModel, joint):
    n_theta = len(model.inertia_params)
    theta = ParameterVector(joint[:n_theta], model.inertia_params.layout)
    xi = ParameterVector(joint[n_theta:], model.potential_params.layout)
    return theta, xi


def _predicted_torques(model: LearnedModel, batch: TransitionBatch):
    """Batched torque prediction; differentiable when the model params are Vars."""
    _, d, dd = _inertia_pieces(model, batch.q)
    c = _christoffel(dd, batch.qd)
    g = _gravity(model, batch.q)
    return ad.einsum("bij,bj->bi", d, batch.qdd) + ad.einsum("bij,bj->bi", c, batch.qd) + g


def _loss_from_joint(model: LearnedModel, joint, batch: TransitionBatch):
    theta, xi = _split_joint(model, joint)
    traced = replace(model, inertia_params=theta, potential_params=xi)
    residual = _predicted_torques(traced, batch) - batch.u
    return ad.amean(ad.vector_norm(residual))


def batch_loss(model: LearnedModel, batch) -> float:
    """Mean Euclidean norm of the torque residual over a batch."""
    if len(batch) == 0:
        raise RejectedInputError("batch must be non-empty")
    batch = _as_batch(batch)
    joint = np.concatenate([np.asarray(model.inertia_params.values), np.asarray(model.potential_params.values)])
    return float(ad.value_of(_loss_from_joint(model, joint, batch)))


def train_step(model: LearnedModel, batch, opt_state: OptimizerState):
    """One Adam step on both networks jointly.  Returns (model', state', pre-step loss)."""
    if len(batch) == 0:
        raise RejectedInputError("batch must be non-empty")
    batch = _as_batch(batch)
    joint = np.concatenate([np.asarray(model.inertia_params.values), np.asarray(model.potential_params.values)])
    grad = loss_param_gradient(lambda p, b: _loss_from_joint(model, p, b), joint, batch)
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError("parameter gradient is non-finite")
    loss = float(ad.value_of(_loss_from_joint(model, joint, batch)))
    new_joint, new_state = adam_step(opt_state, joint, grad)
    theta, xi = _split_joint(model, new_joint)
    return replace(model, inertia_params=theta, potential_params=xi), new_state, loss


def optimizer_for(model: LearnedModel, learning_rate: float = 1e-3) -> OptimizerState:
    n = len(model.inertia_params) + len(model.potential_params)
    return OptimizerState.init(n, learning_rate=learning_rate)


# ---- checkpoints -------------------------------------------------------------------

_MODEL_MAGIC = "delan-checkpoint v1"


def save_model(path, model: LearnedModel, seed: int = -1) -> None:
    with open(path, "w") as stream:
        stream.write(f"{_MODEL_MAGIC}\n")
        stream.write(f"n {model.n}\n")
        stream.write(f"epsilon_pd {float(model.epsilon_pd).hex()}\n")
        stream.write(f"diag_shift {float(model.diag_shift).hex()}\n")
        stream.write(f"inertia_scale {float(model.inertia_scale).hex()}\n")
        stream.write(f"potential_scale {float(model.potential_scale).hex()}\n")
        save_network(stream, model.inertia_spec, model.inertia_params, seed)
        save_network(stream, model.potential_spec, model.potential_params, seed)


def load_model(path) -> LearnedModel:
    with open(path) as stream:
        if stream.readline().strip() != _MODEL_MAGIC:
            raise ValueError("not a model checkpoint")
        header = {}
        for _ in range(5):
            key, _, rest = stream.readline().strip().partition(" ")
            header[key] = rest
        inertia_spec, inertia_params, _ = load_network(stream)
        potential_spec, potential_params, _ = load_network(stream)
    return LearnedModel(
        n=int(header["n"]),
        inertia_spec=inertia_spec,
        inertia_params=inertia_params,
        potential_spec=potential_spec,
        potential_params=potential_params,
        epsilon_pd=float.fromhex(header["epsilon_pd"]),
        diag_shift=float.fromhex(header["diag_shift"]),
        inertia_scale=float.fromhex(header["inertia_scale"]),
        potential_scale=float.fromhex(header["potential_scale"]),
    )
