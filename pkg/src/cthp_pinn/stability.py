"""String stability of CTHP followers.

The speed-to-speed transfer function of one follower is

    H(s) = (beta s + alpha) / (s^2 + (alpha tau + beta) s + alpha)

Strict L2 string stability needs |H(jw)| <= 1 for all w, which reduces to
``alpha^2 tau^2 + 2 alpha beta tau - 2 alpha > 0``; strict L-infinity string
stability needs real poles, ``(alpha tau + beta)^2 - 4 alpha > 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CthpParams, PlatoonTrajectory

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
MARGINAL_BAND = 0.005
PREFIX_TOL = 1e-3


class DegenerateParametersError(ValueError):
    pass


@dataclass(frozen=True)
class StabilityVerdict:
    l2_strict: bool
    linf_strict: bool
    l2_margin: float
    linf_margin: float


@dataclass
class FrequencyResponse:
    omega: np.ndarray
    magnitude: np.ndarray

    @property
    def magnitude_db(self) -> np.ndarray:
        return 20.0 * np.log10(self.magnitude)

    def peak(self) -> tuple[float, float]:
        """(magnitude, omega) of the largest sampled gain."""
        k = int(np.argmax(self.magnitude))
        return float(self.magnitude[k]), float(self.omega[k])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["omega_rad_s", "magnitude", "magnitude_db"])
            for w, m, db in zip(self.omega, self.magnitude, self.magnitude_db):
                writer.writerow([f"{w:.9g}", f"{m:.9g}", f"{db:.9g}"])

    @classmethod
    def from_csv(cls, path) -> "FrequencyResponse":
        arr = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(arr[:, 0], arr[:, 1])


def transfer_magnitude(params: CthpParams, omega):
    """|H(jw)|; accepts scalar or array ``omega`` (rad/s, non-negative)."""
    a, b, tau = params.alpha, params.beta, params.tau
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be non-negative")
    w2 = w * w
    num = a * a + b * b * w2
    den = (a - w2) ** 2 + w2 * (a * tau + b) ** 2
    if np.any(den == 0):
        raise DegenerateParametersError(f"|H(jw)| undefined for {params} at omega=0")
    mag = np.sqrt(num / den)
    return float(mag) if mag.ndim == 0 else mag


def l2_margin(params: CthpParams) -> float:
    a, b, tau = params.alpha, params.beta, params.tau
    return a * a * tau * tau + 2.0 * a * b * tau - 2.0 * a


def linf_margin(params: CthpParams) -> float:
    a, b, tau = params.alpha, params.beta, params.tau
    return (a * tau + b) ** 2 - 4.0 * a


def l2_strict_stable(params: CthpParams) -> tuple[bool, float]:
    m = l2_margin(params)
    return m > 0, m


def linf_strict_stable(params: CthpParams) -> tuple[bool, float]:
    m = linf_margin(params)
    return m > 0, m


def classify(params: CthpParams) -> StabilityVerdict:
    l2, l2m = l2_strict_stable(params)
    linf, linfm = linf_strict_stable(params)
    return StabilityVerdict(l2, linf, l2m, linfm)


def bode_sweep(
    params: CthpParams,
    omega_min: float,
    omega_max: float,
    points: int = 500,
    spacing: str = "log",
) -> FrequencyResponse:
    """Sample |H(jw)| on ``points`` frequencies.

    Log spacing with ``omega_min == 0`` samples w=0 first, then log-spaces the rest
    from ``omega_max * 1e-4``.
    """
    if not 0 <= omega_min < omega_max:
        raise ValueError("need 0 <= omega_min < omega_max")
    if points < 2:
        raise ValueError("need at least two points")
    if spacing == "linear":
        omega = np.linspace(omega_min, omega_max, points)
    elif spacing == "log":
        if omega_min == 0:
            rest = np.logspace(math.log10(omega_max * 1e-4), math.log10(omega_max), points - 1)
            omega = np.concatenate([[0.0], rest])
        else:
            omega = np.logspace(math.log10(omega_min), math.log10(omega_max), points)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    return FrequencyResponse(omega, transfer_magnitude(params, omega))


def golden_section_max(f, lo: float, hi: float, rel_tol: float = 1e-8) -> float:
    """Maximizer of a unimodal ``f`` on [lo, hi]."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > rel_tol * max(abs(lo), abs(hi), 1e-300):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def hinf_norm(params: CthpParams) -> tuple[float, float]:
    """sup_w |H(jw)| and its argmax.

    A 1000-point log sweep on [1e-4, 1e3] rad/s locates the best sample, then a
    golden-section search refines between its neighbours. DC gain is 1, so the
    supremum is at w=0 whenever no sample exceeds it.
    """
    grid = np.logspace(-4, 3, 1000)
    mag = transfer_magnitude(params, grid)
    k = int(np.argmax(mag))
    dc = 1.0 if params.alpha > 0 else float(transfer_magnitude(params, 1e-12))
    if mag[k] <= dc:
        return dc, 0.0
    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[min(k + 1, grid.size - 1)]
    w = golden_section_max(lambda x: transfer_magnitude(params, x), lo, hi)
    return float(transfer_magnitude(params, w)), float(w)


def is_marginal(params: CthpParams, omega: float, band: float = MARGINAL_BAND) -> bool:
    """|H(jw)| within ``band`` (relative) of unity at the driving frequency."""
    return abs(transfer_magnitude(params, omega) - 1.0) <= band


@dataclass
class SignalNormCheck:
    l2: np.ndarray  # per vehicle, leader first
    linf: np.ndarray
    l2_chain: np.ndarray  # l2[i] <= l2[i-1] for i >= 1
    linf_chain: np.ndarray

    @property
    def l2_strict(self) -> bool:
        return bool(np.all(self.l2_chain))

    @property
    def linf_strict(self) -> bool:
        return bool(np.all(self.linf_chain))


def string_stability_signal_check(
    traj: PlatoonTrajectory, signal: str = "velocity", taus=None
) -> SignalNormCheck:
    """Per-vehicle L2 and L-infinity norms of deviations from the initial equilibrium.

    ``signal`` is ``"velocity"`` (leader included) or ``"spacing"`` (followers only).
    """
    from .dataio import deviation_signals

    if traj.n_followers < 1:
        raise ValueError("need a leader and at least one follower")
    chi = deviation_signals(traj, signal=signal, taus=taus)
    l2 = np.sqrt(np.trapezoid(chi**2, traj.t, axis=1))
    linf = np.max(np.abs(chi), axis=1)
    return SignalNormCheck(l2, linf, l2[1:] <= l2[:-1], linf[1:] <= linf[:-1])
