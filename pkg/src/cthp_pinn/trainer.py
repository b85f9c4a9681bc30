"""Physics-inspired network training for CTHP parameter identification.

The surrogate maps normalized time to ``[v0, p1, v1, ..., pM, vM]`` (normalized).
Training minimizes

    loss = psi_f + psi_d

where ``psi_f`` is the mean squared CTHP residual of the surrogate over the
collocation grid and ``psi_d`` the mean squared misfit to the measurements.
Both are evaluated in physical units so that (alpha, beta, tau) keep theirs.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import CthpParams, PlatoonTrajectory, validate_rational
from .nn import AdamState, Mlp, Workspace, adam_step, init_weights

log = logging.getLogger(__name__)

DEFAULT_INIT = (0.05, 0.1, 1.2)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inverse(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class NonFiniteLossError(FloatingPointError):
    def __init__(self, channel: str):
        super().__init__(f"non-finite loss in channel {channel!r}")
        self.channel = channel


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, report: "TrainingReport"):
        super().__init__(message)
        self.report = report


@dataclass
class LossWeights:
    q: tuple[float, float] = (1.0, 1.0)  # residual: gap channel, velocity channel
    r: float = 1.0  # boundary/internal term; folded into psi_f and psi_d on a full grid
    s: tuple[float, float, float] = (1.0, 1.0, 1.0)  # data: gap, follower velocity, leader velocity

    def __post_init__(self):
        self.q = _channels(self.q, 2, "q")
        self.s = _channels(self.s, 3, "s")
        if self.r < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def from_dict(cls, d: dict | None) -> "LossWeights":
        return cls(**(d or {}))


def _channels(value, n, name):
    vals = (float(value),) * n if np.ndim(value) == 0 else tuple(float(x) for x in value)
    if len(vals) != n or any(x < 0 for x in vals):
        raise ValueError(f"loss weight {name} needs {n} non-negative entries")
    return vals


@dataclass
class Normalization:
    """Affine maps between physical and network units.

    Time maps onto ``[-time_span, time_span]``. Output channel ``k`` (ordered
    ``v0, p1, v1, ...``) is ``offset[k] + scale[k] * network_output[k]``.
    """

    t0: float
    t1: float
    offset: np.ndarray
    scale: np.ndarray
    time_span: float = 1.0

    @classmethod
    def fit(
        cls,
        data: PlatoonTrajectory,
        standardize: bool = True,
        velocity_scale: float = 30.0,
        gap_scale: float = 50.0,
        min_scale: float = 0.1,
        time_span: float = 1.0,
    ) -> "Normalization":
        """Per-channel mean/std of the measurements, or fixed unit scales."""
        m = data.n_followers
        if standardize:
            series = np.vstack([data.v0] + [s for i in range(m) for s in (data.p[i], data.v[i])])
            offset = series.mean(axis=1)
            scale = np.maximum(series.std(axis=1), min_scale)
        else:
            offset = np.zeros(2 * m + 1)
            scale = np.array([velocity_scale] + [gap_scale, velocity_scale] * m, dtype=float)
        return cls(float(data.t[0]), float(data.t[-1]), offset, scale, time_span)

    @property
    def dt_scale(self) -> float:
        """d(normalized time)/dt."""
        return 2.0 * self.time_span / (self.t1 - self.t0)

    def time(self, t):
        return self.dt_scale * (np.asarray(t, dtype=float) - self.t0) - self.time_span

    def to_json(self) -> dict:
        return {"t0": self.t0, "t1": self.t1, "offset": self.offset.tolist(),
                "scale": self.scale.tolist(), "time_span": self.time_span}


class LearnableParams:
    """Unconstrained raw values mapped to CTHP parameters through softplus.

    ``shared=True`` ties every follower to one (alpha, beta, tau) triple.
    """

    def __init__(self, n_vehicles: int, shared: bool = False, init: Sequence[float] = DEFAULT_INIT):
        self.n_vehicles = n_vehicles
        self.shared = shared
        rows = 1 if shared else n_vehicles
        self.raw = np.tile(softplus_inverse(np.asarray(init, dtype=float)), (rows, 1))

    def values(self) -> np.ndarray:
        """(M, 3) array of physical parameters per vehicle."""
        v = softplus(self.raw)
        return np.repeat(v, self.n_vehicles, axis=0) if self.shared else v

    def params(self) -> list[CthpParams]:
        return [CthpParams.from_sequence(row) for row in self.values()]


@dataclass
class PinnProblem:
    data: PlatoonTrajectory
    net: Mlp
    learnable: LearnableParams
    loss_weights: LossWeights
    normalization: Normalization
    train_idx: np.ndarray
    test_idx: np.ndarray
    lr: float = 1e-3
    max_iters: int = 60_000
    seed: int = 0
    log_interval: int = 100

    def __post_init__(self):
        m = self.data.n_followers
        if self.net.n_outputs != 2 * m + 1:
            raise ValueError(f"network must have {2 * m + 1} outputs for {m} followers")
        if self.learnable.n_vehicles != m:
            raise ValueError("learnable parameters do not match the number of followers")
        self._workspace = None

    def workspace(self) -> Workspace:
        ws = self._workspace
        if ws is None or ws.layer_sizes != self.net.layer_sizes or ws.n != len(self.data):
            ws = self._workspace = Workspace(self.net.layer_sizes, len(self.data))
        return ws


def make_problem(
    data: PlatoonTrajectory,
    *,
    mode: str = "per-vehicle",
    hidden: Sequence[int] = (60, 60, 60),
    lr: float = 1e-3,
    max_iters: int = 60_000,
    seed: int = 0,
    split_fraction: float = 0.8,
    loss_weights: LossWeights | None = None,
    standardize: bool = True,
    velocity_scale: float = 30.0,
    gap_scale: float = 50.0,
    log_interval: int = 100,
    init: Sequence[float] = DEFAULT_INIT,
) -> PinnProblem:
    """Assemble a problem with a seeded network and an 80/20 style random split."""
    if mode not in ("single", "homogeneous", "per-vehicle"):
        raise ValueError(f"unknown mode {mode!r}")
    m = data.n_followers
    if mode == "single" and m != 1:
        raise ValueError("mode 'single' needs exactly one follower")
    if not 0 < split_fraction <= 1:
        raise ValueError("split_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    n = len(data)
    perm = rng.permutation(n)
    n_train = max(1, int(round(split_fraction * n)))
    net = init_weights([1, *hidden, 2 * m + 1], seed)
    return PinnProblem(
        data=data,
        net=net,
        learnable=LearnableParams(m, shared=(mode == "homogeneous"), init=init),
        loss_weights=loss_weights or LossWeights(),
        normalization=Normalization.fit(data, standardize, velocity_scale, gap_scale),
        train_idx=np.sort(perm[:n_train]),
        test_idx=np.sort(perm[n_train:]),
        lr=lr,
        max_iters=max_iters,
        seed=seed,
        log_interval=log_interval,
    )


@dataclass
class LossValue:
    total: float
    psi_f: float
    psi_d: float
    grad_theta: np.ndarray
    grad_raw: np.ndarray


def build_loss(problem: PinnProblem, colloc_idx=None, data_idx=None) -> LossValue:
    """Composite loss and its gradients w.r.t. network weights and raw parameters.

    ``colloc_idx`` selects the residual points and ``data_idx`` the measured points,
    both as indices into the data grid (defaults: all points / training split).
    """
    data, net, norm, w = problem.data, problem.net, problem.normalization, problem.loss_weights
    n, m = len(data), data.n_followers
    colloc = np.ones(n, bool) if colloc_idx is None else _mask(colloc_idx, n)
    measured = _mask(problem.train_idx if data_idx is None else data_idx, n)
    n_f, n_d = colloc.sum(), measured.sum()
    c = norm.dt_scale

    tape = net._forward_tape(norm.time(data.t), problem.workspace())
    phys = tape.value * norm.scale + norm.offset
    dphys = tape.dvalue * (c * norm.scale)
    vel = phys[:, 0::2]  # (N, M+1): leader then followers
    gap = phys[:, 1::2]  # (N, M)
    dgap = dphys[:, 1::2]
    dvel = dphys[:, 2::2]
    lead, own = vel[:, :-1], vel[:, 1:]
    rel = lead - own

    prm = problem.learnable.values()
    alpha, beta, tau = prm[:, 0], prm[:, 1], prm[:, 2]
    spacing_err = gap - tau * own
    cf = colloc[:, None]
    r_gap = np.where(cf, dgap - rel, 0.0)
    r_vel = np.where(cf, dvel - alpha * spacing_err - beta * rel, 0.0)

    md = measured[:, None]
    e_gap = np.where(md, gap - data.p.T, 0.0)
    e_vel = np.where(md, own - data.v.T, 0.0)
    e_lead = np.where(measured, vel[:, 0] - data.v0, 0.0)

    wf = 1.0 / (n_f * m) if n_f else 0.0
    wd = 1.0 / (n_d * m) if n_d else 0.0
    q_gap, q_vel = w.q
    s_gap, s_vel, s_lead = w.s
    terms = {
        "residual_gap": q_gap * wf * np.sum(r_gap**2),
        "residual_velocity": q_vel * wf * np.sum(r_vel**2),
        "data_gap": s_gap * wd * np.sum(e_gap**2),
        "data_velocity": s_vel * wd * np.sum(e_vel**2),
        "data_leader": s_lead * wd * np.sum(e_lead**2),
    }
    for channel, value in terms.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(channel)
    psi_f = terms["residual_gap"] + terms["residual_velocity"]
    psi_d = terms["data_gap"] + terms["data_velocity"] + terms["data_leader"]

    g_rg = 2.0 * q_gap * wf * r_gap
    g_rv = 2.0 * q_vel * wf * r_vel
    g_gap = -alpha * g_rv + 2.0 * s_gap * wd * e_gap
    g_own = g_rg + (alpha * tau + beta) * g_rv + 2.0 * s_vel * wd * e_vel
    g_lead = -g_rg - beta * g_rv
    g_vel = np.zeros_like(vel)
    g_vel[:, 1:] += g_own
    g_vel[:, :-1] += g_lead
    g_vel[:, 0] += 2.0 * s_lead * wd * e_lead

    g_phys = np.empty_like(phys)
    g_phys[:, 0::2] = g_vel
    g_phys[:, 1::2] = g_gap
    g_dphys = np.zeros_like(phys)
    g_dphys[:, 1::2] = g_rg
    g_dphys[:, 2::2] = g_rv
    grad_theta = tape.backward(g_phys * norm.scale, g_dphys * (c * norm.scale))

    g_prm = np.stack(
        [
            -(g_rv * spacing_err).sum(axis=0),
            -(g_rv * rel).sum(axis=0),
            (g_rv * alpha * own).sum(axis=0),
        ],
        axis=1,
    )
    if problem.learnable.shared:
        g_prm = g_prm.sum(axis=0, keepdims=True)
    grad_raw = g_prm * sigmoid(problem.learnable.raw)
    return LossValue(psi_f + psi_d, psi_f, psi_d, grad_theta, grad_raw)


def _mask(idx, n):
    mask = np.zeros(n, bool)
    mask[np.asarray(idx, dtype=int)] = True
    return mask


@dataclass
class Prediction:
    t: np.ndarray
    v0: np.ndarray
    p: np.ndarray  # (M, N)
    v: np.ndarray  # (M, N)
    extrapolated: np.ndarray  # bool per time
    mae: dict[str, float] = field(default_factory=dict)


def signal_names(m: int) -> list[str]:
    return ["v0"] + [f"{s}{i}" for i in range(1, m + 1) for s in ("p", "v")]


def evaluate(net: Mlp, problem: PinnProblem, times=None, idx=None) -> Prediction:
    """De-normalized predictions; MAE per signal where measurements exist.

    With ``idx`` (indices into the data grid) MAEs are computed against the
    measurements; arbitrary ``times`` give predictions only, flagging any outside
    the training window as extrapolation.
    """
    norm, data = problem.normalization, problem.data
    if times is None:
        idx = np.arange(len(data)) if idx is None else np.asarray(idx, dtype=int)
        times = data.t[idx]
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = net.forward(norm.time(times)) * norm.scale + norm.offset
    v0 = out[:, 0]
    p = out[:, 1::2].T
    v = out[:, 2::2].T
    extrapolated = (times < norm.t0 - 1e-9) | (times > norm.t1 + 1e-9)
    pred = Prediction(times, v0, p, v, extrapolated)
    if idx is not None and len(idx):
        pred.mae["v0"] = float(np.mean(np.abs(v0 - data.v0[idx])))
        for i in range(data.n_followers):
            pred.mae[f"p{i + 1}"] = float(np.mean(np.abs(p[i] - data.p[i, idx])))
            pred.mae[f"v{i + 1}"] = float(np.mean(np.abs(v[i] - data.v[i, idx])))
    return pred


@dataclass
class TrainingReport:
    params: list[CthpParams]
    iterations: list[int]
    loss: list[float]
    psi_f: list[float]
    psi_d: list[float]
    param_trace: list[np.ndarray]  # (M, 3) per logged iteration
    mae_train: dict[str, float]
    mae_test: dict[str, float]
    mae_full: dict[str, float]
    duration_s: float
    converged_at: dict[str, int | None] = field(default_factory=dict)
    completed: bool = True
    message: str = ""

    def to_json(self) -> dict:
        return {
            "params": [[float(x) for x in p.as_tuple()] for p in self.params],
            "completed": self.completed,
            "message": self.message,
            "iterations_run": self.iterations[-1] if self.iterations else 0,
            "final_loss": float(self.loss[-1]) if self.loss else None,
            "mae_train": self.mae_train,
            "mae_test": self.mae_test,
            "mae_full": self.mae_full,
            "converged_at": self.converged_at,
            "duration_s": float(self.duration_s),
        }


def convergence_iterations(iterations, trace, rel_tol: float = 0.01) -> dict[str, int | None]:
    """First logged iteration after which each parameter stays within ``rel_tol`` of its final value."""
    result = {}
    if not iterations:
        return result
    arr = np.asarray(trace)  # (K, M, 3)
    final = arr[-1]
    for i in range(arr.shape[1]):
        for j, name in enumerate(("alpha", "beta", "tau")):
            off = np.abs(arr[:, i, j] - final[i, j]) > rel_tol * abs(final[i, j])
            bad = np.flatnonzero(off)
            k = 0 if bad.size == 0 else bad[-1] + 1
            result[f"{name}{i + 1}"] = iterations[k] if k < len(iterations) else None
    return result


def train(problem: PinnProblem, progress=None) -> TrainingReport:
    """Full-batch Adam on network weights and raw CTHP parameters.

    ``progress`` is an optional callable receiving ``(iteration, LossValue)`` at
    every log interval.
    """
    net, learn = problem.net, problem.learnable
    opt_theta = AdamState(net.n_params, lr=problem.lr)
    opt_raw = AdamState(learn.raw.size, lr=problem.lr)
    iterations, losses, psi_f, psi_d, trace = [], [], [], [], []
    initial = None
    diverged_logs = 0
    start = time.perf_counter()

    def record(k, lv):
        iterations.append(k)
        losses.append(lv.total)
        psi_f.append(lv.psi_f)
        psi_d.append(lv.psi_d)
        trace.append(learn.values().copy())
        for prm in learn.params():
            if not validate_rational(prm):
                raise AssertionError(f"irrational parameters {prm} at iteration {k}")

    def finish(completed, message=""):
        full = evaluate(net, problem, idx=np.arange(len(problem.data)))
        return TrainingReport(
            params=learn.params(),
            iterations=iterations,
            loss=losses,
            psi_f=psi_f,
            psi_d=psi_d,
            param_trace=trace,
            mae_train=evaluate(net, problem, idx=problem.train_idx).mae,
            mae_test=evaluate(net, problem, idx=problem.test_idx).mae if len(problem.test_idx) else {},
            mae_full=full.mae,
            duration_s=time.perf_counter() - start,
            converged_at=convergence_iterations(iterations, trace),
            completed=completed,
            message=message,
        )

    for k in range(problem.max_iters + 1):
        lv = build_loss(problem)
        if initial is None:
            initial = lv.total
        if k % problem.log_interval == 0 or k == problem.max_iters:
            record(k, lv)
            if progress is not None:
                progress(k, lv)
            diverged_logs = diverged_logs + 1 if lv.total > 1e6 * initial else 0
            if diverged_logs >= 100:
                raise TrainingDivergedError(f"loss diverged by iteration {k}", finish(False, "diverged"))
        if k == problem.max_iters:
            break
        adam_step(opt_theta, net.theta, lv.grad_theta)
        raw = learn.raw.reshape(-1)
        adam_step(opt_raw, raw, lv.grad_raw.reshape(-1))
    return finish(True)


def select_vehicles(data: PlatoonTrajectory, vehicles: Sequence[int] | None) -> PlatoonTrajectory:
    """Restrict to a contiguous run of followers; the vehicle before it becomes the leader."""
    if not vehicles:
        return data
    vehicles = sorted(int(v) for v in vehicles)
    first, last = vehicles[0], vehicles[-1]
    if vehicles != list(range(first, last + 1)) or first < 1 or last > data.n_followers:
        raise ValueError(f"vehicles must be a contiguous range within 1..{data.n_followers}")
    v0 = data.v0 if first == 1 else data.v[first - 2]
    return PlatoonTrajectory(data.dt, data.t, v0, data.p[first - 1 : last], data.v[first - 1 : last])


def learn_case(data: PlatoonTrajectory, mode: str = "per-vehicle", progress=None, **kwargs) -> TrainingReport:
    """Train one network for a whole platoon, homogeneous or per-vehicle."""
    return train(make_problem(data, mode=mode, **kwargs), progress=progress)
