"""Fully connected tanh network with exact input-derivative and reverse-mode gradients.

The network maps a scalar input ``t`` to an output vector. Alongside the value it
propagates the tangent ``d/dt`` through every layer, so losses may depend on both
the output and its time derivative. ``backward`` differentiates such losses with
respect to all weights and biases, including the second-order path through the
tangent channel.

All parameters live in one flat float64 vector ``theta``; per-layer weight
matrices and bias vectors are views into it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def parameter_count(layer_sizes: Sequence[int]) -> int:
    return sum(n_out * n_in + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


class Mlp:
    def __init__(self, layer_sizes: Sequence[int], theta: np.ndarray | None = None, seed: int | None = None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ValueError(f"invalid layer sizes {layer_sizes!r}")
        if sizes[0] != 1:
            raise ValueError("input layer must have exactly one neuron (time)")
        self.layer_sizes = sizes
        self.seed = seed
        n = parameter_count(sizes)
        if theta is None:
            theta = np.zeros(n)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {theta.shape}")
        self.theta = theta.copy()
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        offset = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(self.theta[offset : offset + n_out * n_in].reshape(n_out, n_in))
            offset += n_out * n_in
            self.biases.append(self.theta[offset : offset + n_out])
            offset += n_out

    @property
    def n_params(self) -> int:
        return self.theta.size

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def from_layers(cls, weights, biases) -> "Mlp":
        weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in weights]
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        net = cls(sizes)
        for dst, src in zip(net.weights, weights):
            if dst.shape != src.shape:
                raise ValueError("weight shapes do not chain")
            dst[...] = src
        for dst, src in zip(net.biases, biases):
            dst[...] = np.asarray(src, dtype=float).reshape(dst.shape)
        return net

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.theta, seed=self.seed)

    def forward(self, t) -> np.ndarray:
        """Outputs for scalar or 1-D array input; shape (N_L,) or (N, N_L)."""
        scalar = np.ndim(t) == 0
        h = np.reshape(np.asarray(t, dtype=float), (-1, 1))
        last = len(self.weights) - 1
        for ell, (a, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ a.T + b
            h = z if ell == last else np.tanh(z)
        return h[0] if scalar else h

    def forward_with_input_derivative(self, t) -> "DualOutput":
        scalar = np.ndim(t) == 0
        tape = self._forward_tape(np.reshape(np.asarray(t, dtype=float), -1))
        value, dvalue = tape.value, tape.dvalue
        if scalar:
            value, dvalue = value[0], dvalue[0]
        return DualOutput(value, dvalue)

    def _forward_tape(self, t: np.ndarray, workspace: "Workspace | None" = None) -> "ForwardTape":
        n = t.shape[0]
        ws = workspace if workspace is not None else Workspace(self.layer_sizes, n)
        if ws.n != n or ws.layer_sizes != self.layer_sizes:
            raise ValueError("workspace does not match network and batch size")
        # rows [:n] carry values, rows [n:] carry d/dt tangents
        hd = ws.post[0]
        hd[:n, 0] = t
        hd[n:, 0] = 1.0
        last = len(self.weights) - 1
        for ell, (a, b) in enumerate(zip(self.weights, self.biases)):
            zd = ws.pre[ell]
            if ell == 0:
                np.multiply(hd, a[:, 0], out=zd)
            else:
                np.matmul(hd, a.T, out=zd)
            zd[:n] += b
            if ell == last:
                hd = zd
            else:
                hd, s = ws.post[ell + 1], ws.slope[ell]
                h = np.tanh(zd[:n], out=hd[:n])
                np.multiply(h, h, out=s)
                np.subtract(1.0, s, out=s)
                np.multiply(s, zd[n:], out=hd[n:])
        return ForwardTape(self, n, ws)

    def init_glorot(self, seed: int) -> "Mlp":
        rng = np.random.default_rng(seed)
        for a, b in zip(self.weights, self.biases):
            n_out, n_in = a.shape
            limit = np.sqrt(6.0 / (n_in + n_out))
            a[...] = rng.uniform(-limit, limit, size=a.shape)
            b[...] = 0.0
        self.seed = seed
        return self

    def to_json(self, iteration: int | None = None) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [a.tolist() for a in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
            "iteration": iteration,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Mlp":
        net = cls.from_layers(payload["weights"], payload["biases"])
        if net.layer_sizes != list(payload["layer_sizes"]):
            raise ValueError("checkpoint layer_sizes disagree with weight shapes")
        net.seed = payload.get("seed")
        return net

    def save(self, path, iteration: int | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(iteration)))

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_json(json.loads(Path(path).read_text()))


def init_weights(layer_sizes: Sequence[int], seed: int) -> Mlp:
    """Glorot-uniform weights and zero biases, fully determined by ``seed``."""
    return Mlp(layer_sizes).init_glorot(seed)


@dataclass
class DualOutput:
    value: np.ndarray
    dvalue_dt: np.ndarray


class Workspace:
    """Preallocated buffers for repeated batched passes over the same input size.

    A tape built on a workspace is invalidated by the next forward pass that
    reuses it; fresh buffers are allocated when no workspace is given.
    """

    def __init__(self, layer_sizes: Sequence[int], n: int):
        self.layer_sizes = list(layer_sizes)
        self.n = n
        widths = self.layer_sizes
        self.post = [np.empty((2 * n, w)) for w in widths[:-1]]
        self.pre = [np.empty((2 * n, w)) for w in widths[1:]]
        self.slope = [np.empty((n, w)) for w in widths[1:-1]]
        self.grad = [np.empty((2 * n, w)) for w in widths[1:]]
        self.tmp = [np.empty((n, w)) for w in widths[1:-1]]


class ForwardTape:
    """Intermediates of one batched forward pass, consumed by :meth:`backward`."""

    def __init__(self, net: Mlp, n: int, ws: Workspace):
        self.net = net
        self.n = n
        self._ws = ws
        self._theta_version = net.theta.copy()

    @property
    def value(self) -> np.ndarray:
        return self._ws.pre[-1][: self.n]

    @property
    def dvalue(self) -> np.ndarray:
        return self._ws.pre[-1][self.n :]

    def backward(self, grad_value: np.ndarray, grad_dvalue: np.ndarray | None = None) -> np.ndarray:
        """Gradient of a scalar loss with respect to ``net.theta``.

        ``grad_value`` and ``grad_dvalue`` are dL/d(output) and dL/d(d output/dt),
        each of shape (N, N_L).
        """
        net, n, ws = self.net, self.n, self._ws
        if not np.array_equal(net.theta, self._theta_version):
            raise RuntimeError("network parameters changed since the forward pass")
        grad = np.empty_like(net.theta)
        offsets = np.cumsum([0] + [a.size + b.size for a, b in zip(net.weights, net.biases)])

        last = len(net.weights) - 1
        g = ws.grad[last]
        g[:n] = grad_value
        if grad_dvalue is None:
            g[n:] = 0.0
        else:
            g[n:] = grad_dvalue
        for ell in range(last, -1, -1):
            a = net.weights[ell]
            if ell != last:
                # h = tanh(z), d = s * dz with s = 1 - h^2 and ds/dz = -2 h s
                h, s, dz = ws.post[ell + 1][:n], ws.slope[ell], ws.pre[ell][n:]
                gh, gd = g[:n], g[n:]
                tmp = ws.tmp[ell]
                np.multiply(gd, dz, out=tmp)
                tmp *= h
                tmp *= -2.0
                tmp += gh
                np.multiply(s, tmp, out=gh)
                gd *= s
            prev = ws.post[ell]
            off = offsets[ell]
            gw = grad[off : off + a.size].reshape(a.shape)
            if ell == 0:
                gw[:, 0] = g.T @ prev[:, 0]
            else:
                np.matmul(g.T, prev, out=gw)
            grad[off + a.size : offsets[ell + 1]] = g[:n].sum(axis=0)
            if ell > 0:
                np.matmul(g, a, out=ws.grad[ell - 1])
                g = ws.grad[ell - 1]
        return grad


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, message: str, indices: np.ndarray):
        super().__init__(message)
        self.indices = indices


class AdamState:
    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam update, applied to ``params`` in place and returned."""
    if params.shape != grad.shape or state.m.shape != grad.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NonFiniteGradientError(
            f"{bad.size} non-finite gradient components (first at index {bad[0]})", bad
        )
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1**state.step_count)
    v_hat = state.v / (1.0 - b2**state.step_count)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
