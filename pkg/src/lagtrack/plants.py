"""Ground-truth simulated systems: a planar 2-DOF arm and quadrotor attitude.

Both plants expose closed-form (D, C, G) built from their kinetic/potential
energy, a fixed-step RK4 integrator with zero-order-hold control, and
energy bookkeeping for conservation tests.  The dynamics kernels broadcast
over leading batch axes so population-based tuning can rollout many
candidates at once.

Arm conventions: q = (alpha, beta) with alpha the first-link angle from the
hanging vertical and beta the second link's angle relative to the first,
counterclockwise positive; uniform rods with centers of mass at midpoints.

Quad conventions: q = (roll, pitch, yaw) Euler angles; D(q) = W^T J W where
W maps Euler-angle rates to body rates; the control u is the generalized
force conjugate to the Euler angles; no potential (rotation about the CoM).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .delan import DynamicsTriple
from .errors import (
    DimensionMismatchError,
    GimbalProximityError,
    RejectedInputError,
    SimulationBlowUpError,
    SingularInertiaError,
)

__all__ = [
    "ArmParams",
    "QuadParams",
    "PlantState",
    "ArmPlant",
    "QuadAttitudePlant",
    "forward_accel",
    "step",
    "rotor_mix",
    "RotorCommand",
    "load_arm_params",
    "load_quad_params",
    "save_params",
]

GIMBAL_MARGIN = np.pi / 2 - 0.1


def _positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise RejectedInputError(f"{name} must be positive, got {value}")


def _check_rates(dt_sim: float, dt_ctrl: float) -> None:
    _positive(dt_sim=dt_sim, dt_ctrl=dt_ctrl)
    ratio = dt_ctrl / dt_sim
    if abs(ratio - round(ratio)) > 1e-9:
        raise RejectedInputError(f"dt_ctrl must be an integer multiple of dt_sim, got ratio {ratio}")


@dataclass(frozen=True)
class ArmParams:
    """Two-link arm constants (masses kg, lengths m, inertia kg m^2, torque N m)."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    j_link: float = 0.083  # per-link inertia about its center of mass
    tau_max: float = 30.0
    dt_sim: float = 1.0 / 240.0
    dt_ctrl: float = 1.0 / 48.0
    g: float = 9.81

    def __post_init__(self):
        _positive(m1=self.m1, m2=self.m2, l1=self.l1, l2=self.l2, j_link=self.j_link, tau_max=self.tau_max, g=self.g)
        _check_rates(self.dt_sim, self.dt_ctrl)


@dataclass(frozen=True)
class QuadParams:
    """Quadrotor attitude constants (Crazyflie-2.0-like defaults)."""

    m: float = 0.027
    l_arm: float = 0.046
    r_rotor: float = 0.022
    j_diag: tuple[float, float, float] = (1.4e-5, 1.4e-5, 2.2e-5)
    t_max: float = 0.16  # max thrust per rotor, N
    k_f: float = 3.16e-10  # thrust coefficient, N s^2
    k_m: float = 7.94e-12  # rotor drag torque coefficient, N m s^2
    dt_sim: float = 1.0 / 240.0
    dt_ctrl: float = 1.0 / 48.0
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "j_diag", tuple(float(j) for j in self.j_diag))
        _positive(m=self.m, l_arm=self.l_arm, r_rotor=self.r_rotor, t_max=self.t_max, k_f=self.k_f, k_m=self.k_m)
        if any(j <= 0 for j in self.j_diag):
            raise RejectedInputError("inertia diagonal must be positive")
        _check_rates(self.dt_sim, self.dt_ctrl)

    @property
    def inertia(self) -> np.ndarray:
        return np.diag(self.j_diag)


@dataclass(frozen=True)
class PlantState:
    """Generalized position/velocity and simulation time."""

    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=np.float64))


class ArmPlant:
    """Analytic two-link arm."""

    name = "arm"
    n = 2

    def __init__(self, params: ArmParams | None = None):
        self.params = params or ArmParams()

    @property
    def torque_limit(self) -> np.ndarray:
        return np.full(2, self.params.tau_max)

    def _dcg(self, q, qd):
        """(D, C, G) with broadcasting over leading axes of q/qd (..., 2)."""
        p = self.params
        alpha = q[..., 0]
        beta = q[..., 1]
        ad_, bd = qd[..., 0], qd[..., 1]
        cos_b, sin_b = np.cos(beta), np.sin(beta)

        d11 = p.m1 * p.l1**2 / 4 + p.j_link + p.m2 * (p.l1**2 + p.l2**2 / 4 + p.l1 * p.l2 * cos_b) + p.j_link
        d12 = p.m2 * (p.l2**2 / 4 + p.l1 * p.l2 * cos_b / 2) + p.j_link
        d22 = np.broadcast_to(p.m2 * p.l2**2 / 4 + p.j_link, np.shape(beta))
        d = np.stack(
            [np.stack([d11, d12], axis=-1), np.stack([d12, d22], axis=-1)], axis=-2
        )

        h = -0.5 * p.m2 * p.l1 * p.l2 * sin_b
        zero = np.zeros_like(h)
        c = np.stack(
            [np.stack([h * bd, h * (ad_ + bd)], axis=-1), np.stack([-h * ad_, zero], axis=-1)],
            axis=-2,
        )

        s1, s12 = np.sin(alpha), np.sin(alpha + beta)
        g2 = p.m2 * p.g * p.l2 / 2 * s12
        g1 = (p.m1 * p.l1 / 2 + p.m2 * p.l1) * p.g * s1 + g2
        g = np.stack([g1, g2], axis=-1)
        return d, c, g

    def dynamics(self, q, qd) -> DynamicsTriple:
        q, qd = _check_vectors(self.n, q, qd)
        d, c, g = self._dcg(q, qd)
        return DynamicsTriple(d, c, g)

    def potential(self, q) -> float:
        p = self.params
        alpha, beta = q
        y1 = -p.l1 / 2 * np.cos(alpha)
        y2 = -p.l1 * np.cos(alpha) - p.l2 / 2 * np.cos(alpha + beta)
        return p.g * (p.m1 * y1 + p.m2 * y2)

    def kinetic(self, q, qd) -> float:
        d, _, _ = self._dcg(np.asarray(q, float), np.asarray(qd, float))
        return 0.5 * float(qd @ d @ qd)

    def energy(self, q, qd) -> float:
        return self.kinetic(q, qd) + self.potential(q)


class QuadAttitudePlant:
    """Rigid-body attitude dynamics in Euler coordinates, hover thrust assumed."""

    name = "quad"
    n = 3

    def __init__(self, params: QuadParams | None = None):
        self.params = params or QuadParams()

    @property
    def torque_limit(self) -> np.ndarray:
        p = self.params
        a = p.l_arm / np.sqrt(2.0)
        c = p.k_m / p.k_f
        return np.array([2 * p.t_max * a, 2 * p.t_max * a, 2 * p.t_max * c])

    @staticmethod
    def _rate_map(q):
        """W with body rates = W @ Euler rates, plus dW/droll and dW/dpitch."""
        roll = q[..., 0]
        pitch = q[..., 1]
        sr, cr = np.sin(roll), np.cos(roll)
        sp, cp = np.sin(pitch), np.cos(pitch)
        one = np.ones_like(roll)
        zero = np.zeros_like(roll)

        def mat(rows):
            return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

        w = mat([[one, zero, -sp], [zero, cr, sr * cp], [zero, -sr, cr * cp]])
        dw_roll = mat([[zero, zero, zero], [zero, -sr, cr * cp], [zero, -cr, -sr * cp]])
        dw_pitch = mat([[zero, zero, -cp], [zero, zero, -sr * sp], [zero, zero, -cr * sp]])
        return w, dw_roll, dw_pitch

    def _dcg(self, q, qd):
        pitch = q[..., 1]
        # batched callers (population rollouts) handle the bound themselves
        if q.ndim == 1 and np.abs(pitch) >= GIMBAL_MARGIN:
            raise GimbalProximityError(
                f"|pitch| reached {abs(float(pitch)):.3f} rad, within 0.1 of the Euler-rate singularity"
            )
        j = self.params.inertia
        w, dw_r, dw_p = self._rate_map(q)
        d = np.einsum("...ji,jk,...kl->...il", w, j, w)
        dd = np.zeros(d.shape + (3,))
        for k, dw in ((0, dw_r), (1, dw_p)):
            dd[..., k] = np.einsum("...ji,jk,...kl->...il", dw, j, w) + np.einsum(
                "...ji,jk,...kl->...il", w, j, dw
            )
        t1 = np.einsum("...ijk,...k->...ij", dd, qd)
        t2 = np.einsum("...ikj,...k->...ij", dd, qd)
        t3 = np.einsum("...jki,...k->...ij", dd, qd)
        c = 0.5 * (t1 + t2 - t3)
        g = np.zeros(q.shape)
        return d, c, g

    def dynamics(self, q, qd) -> DynamicsTriple:
        q, qd = _check_vectors(self.n, q, qd)
        d, c, g = self._dcg(q, qd)
        return DynamicsTriple(d, c, g)

    def inertia_rate(self, q, qd) -> np.ndarray:
        """dD/dt along qd (for structural tests)."""
        q, qd = _check_vectors(self.n, q, qd)
        h = 1e-7
        dp, _, _ = self._dcg(q + h * qd, np.zeros(3))
        dm, _, _ = self._dcg(q - h * qd, np.zeros(3))
        return (dp - dm) / (2 * h)

    def kinetic(self, q, qd) -> float:
        d, _, _ = self._dcg(np.asarray(q, float), np.asarray(qd, float))
        return 0.5 * float(qd @ d @ qd)

    def potential(self, q) -> float:
        return 0.0

    def energy(self, q, qd) -> float:
        return self.kinetic(q, qd)


def _check_vectors(n: int, *vecs):
    out = []
    for v in vecs:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (n,):
            raise DimensionMismatchError(f"expected shape ({n},), got {v.shape}")
        out.append(v)
    return out


# ---- acceleration and integration ------------------------------------------------


def forward_accel(triple: DynamicsTriple, qd, u) -> np.ndarray:
    """Solve D qdd = u - C qd - G through a positive-definite factorization."""
    qd = np.asarray(qd, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    rhs = u - triple.c @ qd - triple.g
    try:
        return cho_solve(cho_factor(triple.d, lower=True), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError(f"inertia factorization failed: {exc}") from exc


def step(plant, state: PlantState, u, dt_ctrl: float | None = None) -> PlantState:
    """Advance one control period: RK4 at dt_sim substeps, u held constant.

    The command is clamped to the plant's torque limits before integration.
    """
    p = plant.params
    dt_ctrl = p.dt_ctrl if dt_ctrl is None else dt_ctrl
    _check_rates(p.dt_sim, dt_ctrl)
    n_sub = int(round(dt_ctrl / p.dt_sim))
    u = np.clip(np.asarray(u, dtype=np.float64), -plant.torque_limit, plant.torque_limit)

    def deriv(q, qd):
        d, c, g = plant._dcg(q, qd)
        rhs = u - c @ qd - g
        return qd, np.linalg.solve(d, rhs)

    q, qd = state.q.copy(), state.qd.copy()
    h = p.dt_sim
    with np.errstate(over="ignore", invalid="ignore"):  # blow-ups raise below
        for k in range(n_sub):
            k1q, k1v = deriv(q, qd)
            k2q, k2v = deriv(q + 0.5 * h * k1q, qd + 0.5 * h * k1v)
            k3q, k3v = deriv(q + 0.5 * h * k2q, qd + 0.5 * h * k2v)
            k4q, k4v = deriv(q + h * k3q, qd + h * k3v)
            q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            qd = qd + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
                raise SimulationBlowUpError("state became non-finite", step_index=k)
    return PlantState(q, qd, state.t + dt_ctrl)


# ---- rotor mixing (optional realism layer, not in the control loop) ----------------


@dataclass(frozen=True)
class RotorCommand:
    """Result of inverting the mixer: rotor speeds, thrusts, and clamp flag."""

    speeds: np.ndarray  # rad/s, 4 rotors
    thrusts: np.ndarray  # N, after clamping
    saturated: bool


def _mixer(params: QuadParams) -> np.ndarray:
    """Rows: total thrust, roll, pitch, yaw from the 4 per-rotor thrusts.

    X layout, rotors on the diagonals at +-l/sqrt(2); rotors 1 and 3 spin
    opposite to rotors 2 and 4.
    """
    a = params.l_arm / np.sqrt(2.0)
    c = params.k_m / params.k_f
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [a, a, -a, -a],
            [-a, a, a, -a],
            [-c, c, -c, c],
        ]
    )


def rotor_mix(params: QuadParams, total_thrust: float, tau_body) -> RotorCommand:
    """Invert the X-quad mixer into per-rotor speeds, clamping to [0, t_max]."""
    tau_body = np.asarray(tau_body, dtype=np.float64)
    if tau_body.shape != (3,):
        raise DimensionMismatchError(f"tau_body must have shape (3,), got {tau_body.shape}")
    wrench = np.concatenate([[float(total_thrust)], tau_body])
    thrusts = np.linalg.solve(_mixer(params), wrench)
    clamped = np.clip(thrusts, 0.0, params.t_max)
    saturated = bool(np.any(np.abs(clamped - thrusts) > 1e-15))
    speeds = np.sqrt(clamped / params.k_f)
    return RotorCommand(speeds=speeds, thrusts=clamped, saturated=saturated)


def wrench_from_speeds(params: QuadParams, speeds) -> np.ndarray:
    """(total thrust, body torques) produced by rotor speeds; mixer forward map."""
    thrusts = params.k_f * np.asarray(speeds, dtype=np.float64) ** 2
    return _mixer(params) @ thrusts


# ---- parameter files ------------------------------------------------------------
#
# configparser key/value files with one [arm] or [quad] section; values may
# be plain floats or exact fractions like 1/240.


def _parse_number(text: str) -> float:
    return float(Fraction(text))


def _read_section(path, section: str) -> dict[str, float]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        parser.read_file(fh)
    if not parser.has_section(section):
        raise RejectedInputError(f"{path}: missing [{section}] section")
    return {key: _parse_number(value) for key, value in parser.items(section)}


def load_arm_params(path) -> ArmParams:
    values = _read_section(path, "arm")
    return ArmParams(**values)


def load_quad_params(path) -> QuadParams:
    values = _read_section(path, "quad")
    j = (values.pop("jx"), values.pop("jy"), values.pop("jz"))
    return QuadParams(j_diag=j, **values)


def save_params(path, params) -> None:
    parser = configparser.ConfigParser()
    if isinstance(params, ArmParams):
        section = "arm"
        items = {k: repr(getattr(params, k)) for k in ("m1", "m2", "l1", "l2", "j_link", "tau_max", "dt_sim", "dt_ctrl", "g")}
    elif isinstance(params, QuadParams):
        section = "quad"
        items = {k: repr(getattr(params, k)) for k in ("m", "l_arm", "r_rotor", "t_max", "k_f", "k_m", "dt_sim", "dt_ctrl")}
        items.update(jx=repr(params.j_diag[0]), jy=repr(params.j_diag[1]), jz=repr(params.j_diag[2]))
    else:
        raise RejectedInputError(f"unknown params type {type(params)!r}")
    parser[section] = items
    with open(path, "w") as fh:
        parser.write(fh)
