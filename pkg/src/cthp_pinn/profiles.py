"""Leader velocity profiles.

A profile is any callable mapping an array of times (s) to velocities (m/s).
Sampled series are wrapped in :class:`SampledProfile` and linearly interpolated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SampledProfile:
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("sampled profile needs matching 1-D t and v arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("profile times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def __call__(self, t):
        tq = np.asarray(t, dtype=float)
        if tq.size and (tq.min() < self.t[0] - 1e-9 or tq.max() > self.t[-1] + 1e-9):
            raise ValueError(
                f"profile defined on [{self.t[0]}, {self.t[-1]}] s, "
                f"queried on [{tq.min()}, {tq.max()}] s"
            )
        return np.interp(tq, self.t, self.v)


def as_profile(profile):
    if isinstance(profile, SampledProfile) or callable(profile):
        return profile
    t, v = profile
    return SampledProfile(np.asarray(t), np.asarray(v))


class Constant:
    def __init__(self, v: float):
        self.v = float(v)

    def __call__(self, t):
        return np.full(np.shape(t), self.v)


class Step:
    def __init__(self, v_before: float, v_after: float, t_step: float):
        self.v_before, self.v_after, self.t_step = float(v_before), float(v_after), float(t_step)

    def __call__(self, t):
        return np.where(np.asarray(t) < self.t_step, self.v_before, self.v_after)


class SinusoidAfterHold:
    """``base`` until ``hold``, then ``base + amplitude * sin(omega * (t - hold))``."""

    def __init__(self, base: float, amplitude: float, omega: float, hold: float):
        self.base, self.amplitude = float(base), float(amplitude)
        self.omega, self.hold = float(omega), float(hold)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.sin(self.omega * (t - self.hold))
        return self.base + np.where(t > self.hold, self.amplitude * s, 0.0)


class MultiSine:
    """``base + sum_k a_k * sin(omega_k * t)``; equals ``base`` at t=0."""

    def __init__(self, base: float, amplitudes: Sequence[float], omegas: Sequence[float]):
        if len(amplitudes) != len(omegas):
            raise ValueError("amplitudes and omegas differ in length")
        self.base = float(base)
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.omegas = np.asarray(omegas, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.base + np.sin(np.multiply.outer(t, self.omegas)) @ self.amplitudes


def perturbed_cruise(base: float = 21.3) -> MultiSine:
    """Default synthetic leader: cruise at ``base`` with three slow speed swings.

    Stands in for a recorded highway leader; persistently exciting for
    (alpha, beta, tau) while staying smooth over a 300 s window.
    """
    return MultiSine(base, amplitudes=(1.6, 0.9, 0.5), omegas=(0.045, 0.11, 0.19))


def builtin(spec: str):
    """Parse ``name[:comma-separated args]`` into a profile.

    ``constant:v``, ``step:v1,v2,t``, ``sinusoid:base,amp,omega,hold``,
    ``multisine:base,a1,w1,a2,w2,...``, ``perturbed[:base]``.
    """
    name, _, rest = spec.partition(":")
    args = [float(x) for x in rest.split(",")] if rest else []
    try:
        if name == "constant":
            return Constant(*args)
        if name == "step":
            return Step(*args)
        if name == "sinusoid":
            return SinusoidAfterHold(*args)
        if name == "multisine":
            if len(args) < 3 or len(args) % 2 == 0:
                raise ValueError
            return MultiSine(args[0], args[1::2], args[2::2])
        if name == "perturbed":
            return perturbed_cruise(*args)
    except TypeError as exc:
        raise ValueError(f"bad arguments for leader profile {spec!r}") from exc
    except ValueError as exc:
        raise ValueError(f"bad arguments for leader profile {spec!r}") from exc
    raise ValueError(f"unknown leader profile {name!r}")
