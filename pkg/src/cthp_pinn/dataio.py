"""Canonical trajectory CSV, synthetic data generation and derived statistics.

Canonical file: header ``t,v0,p1,v1,...,pM,vM``; units s, m/s, m; uniform
0.1 s spacing; UTF-8 with LF line endings.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import CthpParams, PlatoonConfig, PlatoonTrajectory, VehicleState, simulate_platoon

TIME_JITTER_TOL = 1e-6
EQUILIBRIUM_TOL = 1e-3


class TrajectoryFileError(ValueError):
    """Malformed canonical trajectory file; ``code`` says which check failed."""

    HEADER = "header"
    SPACING = "spacing"
    NAN = "nan"
    GAP = "nonpositive-gap"
    VELOCITY = "negative-velocity"
    PARSE = "parse"

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


def header_for(m: int) -> list[str]:
    return ["t", "v0"] + [f"{s}{i}" for i in range(1, m + 1) for s in ("p", "v")]


def save_trajectory(traj: PlatoonTrajectory, path, digits: int = 9) -> None:
    """Write the canonical CSV; ``digits=17`` makes the round trip bit-exact."""
    cols = [traj.t, traj.v0]
    for i in range(traj.n_followers):
        cols += [traj.p[i], traj.v[i]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header_for(traj.n_followers))
        for row in zip(*cols):
            writer.writerow([f"{x:.{digits}g}" for x in row])


def load_trajectory(path) -> PlatoonTrajectory:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TrajectoryFileError(TrajectoryFileError.HEADER, f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    m = (len(header) - 2) // 2
    if len(header) < 4 or len(header) % 2 or header != header_for(m):
        raise TrajectoryFileError(
            TrajectoryFileError.HEADER, f"{path}: expected header like t,v0,p1,v1,..., got {','.join(header)}"
        )
    try:
        arr = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise TrajectoryFileError(TrajectoryFileError.PARSE, f"{path}: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != len(header):
        raise TrajectoryFileError(TrajectoryFileError.PARSE, f"{path}: ragged or too few rows")
    if np.isnan(arr).any():
        r, c = np.argwhere(np.isnan(arr))[0]
        raise TrajectoryFileError(TrajectoryFileError.NAN, f"{path}: NaN in column {header[c]} row {r + 2}")
    t = arr[:, 0]
    steps = np.diff(t)
    dt = float(np.round(np.median(steps), 9))
    if dt <= 0 or np.any(np.abs(steps - dt) > TIME_JITTER_TOL):
        k = int(np.argmax(np.abs(steps - dt)))
        raise TrajectoryFileError(
            TrajectoryFileError.SPACING, f"{path}: step {steps[k]:.9g} s at row {k + 3} differs from {dt} s"
        )
    p, v = arr[:, 2::2].T, arr[:, 3::2].T
    if np.any(p <= 0):
        raise TrajectoryFileError(TrajectoryFileError.GAP, f"{path}: non-positive space-gap")
    if np.any(v < 0) or np.any(arr[:, 1] < 0):
        raise TrajectoryFileError(TrajectoryFileError.VELOCITY, f"{path}: negative velocity")
    # regularize t to the exact grid; jitter was checked above
    t_grid = t[0] + dt * np.arange(t.size)
    return PlatoonTrajectory(dt=dt, t=t_grid, v0=arr[:, 1], p=p, v=v)


def generate_synthetic(
    params: CthpParams | Sequence[CthpParams],
    initial: VehicleState | Sequence[VehicleState],
    leader_profile,
    horizon: float = 300.0,
    dt_internal: float = 0.01,
    dt_output: float = 0.1,
) -> PlatoonTrajectory:
    """Simulated platoon sampled at 10 Hz (3001 samples for the default 300 s)."""
    followers = [params] if isinstance(params, CthpParams) else list(params)
    states = [initial] if isinstance(initial, VehicleState) else list(initial)
    cfg = PlatoonConfig(followers=followers, leader_profile=leader_profile, initial_states=states)
    return simulate_platoon(cfg, horizon, dt_internal=dt_internal, dt_output=dt_output)


def mean_time_gap(p, v, min_speed: float = 0.5) -> tuple[float, int]:
    """Mean of p/v over samples with v > ``min_speed``; returns (mean, n_excluded)."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    keep = v > min_speed
    if not keep.any():
        raise ValueError("every sample is below the low-speed threshold; time-gap undefined")
    return float(np.mean(p[keep] / v[keep])), int((~keep).sum())


def deviation_signals(
    traj: PlatoonTrajectory,
    signal: str = "velocity",
    v_ref: float | None = None,
    taus=None,
    tol: float = EQUILIBRIUM_TOL,
) -> np.ndarray:
    """Deviation of each vehicle's signal from the reference equilibrium.

    Velocity mode returns rows for the leader and every follower, ``v_i - v_ref``.
    Spacing mode returns follower rows only, ``p_i - tau_i * v_ref``; without
    ``taus`` the initial gaps serve as the equilibrium spacing.
    The reference speed defaults to the leader's first sample, which must be an
    equilibrium of every follower within ``tol``.
    """
    if v_ref is None:
        v_ref = float(traj.v0[0])
        speeds = np.concatenate([[traj.v0[0]], traj.v[:, 0]])
        if np.any(np.abs(speeds - v_ref) > tol):
            raise ValueError("no quiescent prefix: initial velocities are not equal")
        if taus is not None and np.any(np.abs(traj.p[:, 0] - np.asarray(taus) * traj.v[:, 0]) > tol):
            raise ValueError("no quiescent prefix: initial gaps are not at tau * v")
    if signal == "velocity":
        return traj.velocities() - v_ref
    if signal == "spacing":
        ref = traj.p[:, :1] if taus is None else (np.asarray(taus, dtype=float) * v_ref)[:, None]
        return traj.p - ref
    raise ValueError(f"unknown signal {signal!r}; expected 'velocity' or 'spacing'")
