"""Constant time-headway (CTHP) car-following model and platoon simulation.

Each ACC follower ``i`` obeys

    dp_i/dt = v_{i-1} - v_i
    dv_i/dt = alpha_i * (p_i - tau_i * v_i) + beta_i * (v_{i-1} - v_i)

where ``p_i`` is the bumper-to-bumper gap to the predecessor.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .profiles import SampledProfile, as_profile

LeaderProfile = Union[Callable, SampledProfile]

UNIFORM_DT_TOL = 1e-9


@dataclass(frozen=True)
class CthpParams:
    alpha: float  # gap gain, 1/s^2
    beta: float  # relative-velocity gain, 1/s
    tau: float  # time headway, s

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.tau)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "CthpParams":
        alpha, beta, tau = (float(x) for x in values)
        return cls(alpha, beta, tau)


@dataclass(frozen=True)
class VehicleState:
    p: float  # space-gap, m
    v: float  # velocity, m/s


@dataclass(frozen=True)
class RationalCheck:
    ok: bool
    violated: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class PlatoonConfig:
    followers: list[CthpParams]
    leader_profile: LeaderProfile
    initial_states: list[VehicleState]

    def __post_init__(self):
        if len(self.followers) < 1:
            raise ValueError("platoon needs at least one follower")
        if len(self.followers) != len(self.initial_states):
            raise ValueError(
                f"{len(self.followers)} follower parameter sets but "
                f"{len(self.initial_states)} initial states"
            )


@dataclass
class PlatoonTrajectory:
    """Sampled platoon trajectory; ``p`` and ``v`` have shape (M, N)."""

    dt: float
    t: np.ndarray
    v0: np.ndarray
    p: np.ndarray
    v: np.ndarray
    collisions: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        n = self.t.shape[0]
        if self.v0.shape != (n,) or self.p.shape != self.v.shape or self.p.shape[1] != n:
            raise ValueError("trajectory series lengths differ")
        if n > 1:
            steps = np.diff(self.t)
            if np.any(np.abs(steps - self.dt) > UNIFORM_DT_TOL * max(1.0, self.t[-1])):
                raise ValueError("sample times are not uniformly spaced at dt")

    @property
    def n_followers(self) -> int:
        return self.p.shape[0]

    def __len__(self) -> int:
        return self.t.shape[0]

    def velocities(self) -> np.ndarray:
        """Leader and follower velocities stacked, shape (M + 1, N)."""
        return np.vstack([self.v0[None, :], self.v])

    def state(self, i: int, k: int) -> VehicleState:
        """State of follower ``i`` (1-based) at sample ``k``."""
        return VehicleState(float(self.p[i - 1, k]), float(self.v[i - 1, k]))


def cthp_acceleration(params: CthpParams, state: VehicleState, v_leader: float) -> float:
    return params.alpha * (state.p - params.tau * state.v) + params.beta * (v_leader - state.v)


def equilibrium_state(params: CthpParams, v: float) -> VehicleState:
    if v < 0:
        raise ValueError("equilibrium velocity must be non-negative")
    return VehicleState(params.tau * v, v)


def validate_rational(params: CthpParams) -> RationalCheck:
    """Check the rational driving sign constraints on (alpha, beta, tau)."""
    violated = []
    if not params.alpha >= 0:
        violated.append("alpha>=0")
    if not params.beta >= 0:
        violated.append("beta>=0")
    if not params.tau > 0:
        violated.append("tau>0")
    if not params.alpha * params.tau >= 0:
        violated.append("alpha*tau>=0")
    return RationalCheck(not violated, tuple(violated))


def _system_matrices(followers: Sequence[CthpParams]) -> tuple[np.ndarray, np.ndarray]:
    """Return (A, b) with d[p1, v1, ..., pM, vM]/dt = A x + b * v0."""
    m = len(followers)
    a = np.zeros((2 * m, 2 * m))
    b = np.zeros(2 * m)
    for i, prm in enumerate(followers):
        ip, iv = 2 * i, 2 * i + 1
        a[ip, iv] = -1.0
        a[iv, ip] = prm.alpha
        a[iv, iv] = -(prm.alpha * prm.tau + prm.beta)
        if i == 0:
            b[ip] = 1.0
            b[iv] = prm.beta
        else:
            a[ip, iv - 2] = 1.0
            a[iv, iv - 2] = prm.beta
    return a, b


def simulate_platoon(
    config: PlatoonConfig,
    horizon: float,
    dt_internal: float = 0.01,
    dt_output: float = 0.1,
) -> PlatoonTrajectory:
    """Integrate the platoon with classical fixed-step RK4.

    Follower ``i`` sees follower ``i-1``'s simulated velocity as its leader.
    Output is subsampled every ``dt_output`` seconds starting at t=0.
    Gap collapses (p <= 0) are recorded in ``collisions``, not raised.
    """
    if not dt_internal > 0 or not dt_output > 0:
        raise ValueError("time steps must be positive")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ratio = dt_output / dt_internal
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * ratio:
        raise ValueError("dt_output must be an integer multiple of dt_internal")
    n_out = int(math.floor(horizon / dt_output + 1e-9)) + 1
    n_steps = (n_out - 1) * stride

    leader = as_profile(config.leader_profile)
    a, b = _system_matrices(config.followers)
    h = dt_internal
    # leader at every half step: index 2k is t_k, 2k+1 is t_k + h/2
    half_grid = np.arange(2 * n_steps + 1) * (h / 2)
    u = np.broadcast_to(np.asarray(leader(half_grid), dtype=float), half_grid.shape)

    x = np.array([c for s in config.initial_states for c in (s.p, s.v)], dtype=float)
    m = len(config.followers)
    out = np.empty((n_out, 2 * m))
    out[0] = x
    for k in range(n_steps):
        u0, uh, u1 = u[2 * k], u[2 * k + 1], u[2 * k + 2]
        k1 = a @ x + b * u0
        k2 = a @ (x + 0.5 * h * k1) + b * uh
        k3 = a @ (x + 0.5 * h * k2) + b * uh
        k4 = a @ (x + h * k3) + b * u1
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = x

    t = np.arange(n_out) * dt_output
    p = out[:, 0::2].T.copy()
    v = out[:, 1::2].T.copy()
    collisions = []
    for i in range(m):
        hit = np.flatnonzero(p[i] <= 0)
        if hit.size:
            collisions.append((i + 1, float(t[hit[0]])))
    return PlatoonTrajectory(
        dt=dt_output, t=t, v0=u[0 : 2 * n_steps + 1 : 2 * stride].copy(), p=p, v=v,
        collisions=collisions,
    )


def _expm_2x2(a: np.ndarray, t: float) -> np.ndarray:
    """exp(a t) for a real 2x2 matrix, valid through repeated eigenvalues."""
    m = 0.5 * (a[0, 0] + a[1, 1])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    q = cmath.sqrt(m * m - det)
    qt = q * t
    if abs(qt) < 1e-4:
        # series for cosh and sinh(qt)/q
        q2t2 = qt * qt
        ch = 1 + q2t2 / 2 + q2t2 * q2t2 / 24
        sh_over_q = t * (1 + q2t2 / 6 + q2t2 * q2t2 / 120)
    else:
        ch = cmath.cosh(qt)
        sh_over_q = cmath.sinh(qt) / q
    shifted = a - m * np.eye(2)
    return math.exp(m * t) * (ch.real * np.eye(2) + sh_over_q.real * shifted)


def analytic_linear_response(
    params: CthpParams, state0: VehicleState, v_leader: float, t: float
) -> VehicleState:
    """Closed-form single-follower state at time ``t`` under a constant leader speed."""
    if t < 0:
        raise ValueError("t must be non-negative")
    a, _ = _system_matrices([params])
    x_eq = np.array([params.tau * v_leader, v_leader])
    x = x_eq + _expm_2x2(a, t) @ (np.array([state0.p, state0.v]) - x_eq)
    return VehicleState(float(x[0]), float(x[1]))
