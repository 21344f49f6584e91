"""Fully connected ReLU network with an analytic MSE gradient."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch
from .params import NetworkParams, glorot_uniform

ACTIVATIONS = ("tanh", "sigmoid", "identity")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_dim: int = 256
    n_hidden_layers: int = 4
    output_activation: str = "tanh"
    # fixed std of the truncated-Gaussian action head; the MSE objective never reads it
    sigma: float = 0.1

    def __post_init__(self):
        if min(self.input_dim, self.output_dim, self.hidden_dim) <= 0 or self.n_hidden_layers < 0:
            raise ValueError("MLP dims must be positive")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")

    def widths(self) -> list[int]:
        return [self.input_dim] + [self.hidden_dim] * self.n_hidden_layers + [self.output_dim]

    def layout(self):
        w = self.widths()
        out = []
        for i in range(len(w) - 1):
            out += [(f"W{i}", (w[i], w[i + 1])), (f"b{i}", (w[i + 1],))]
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def init_mlp(spec: MlpSpec, seed: int) -> NetworkParams:
    rng = np.random.default_rng(seed)
    params = NetworkParams(spec.layout())
    w = spec.widths()
    for i in range(len(w) - 1):
        params[f"W{i}"][...] = glorot_uniform(rng, w[i], w[i + 1], (w[i], w[i + 1]))
    return params


def _activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _activation_grad(y, kind):
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(y)


def _check_input(spec: MlpSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"expected input of shape (batch, {spec.input_dim}), got {x.shape}")
    return x


def _forward(params, spec, x):
    p = params.unflatten(params.theta)
    n_layers = spec.n_hidden_layers + 1
    acts = [x]
    h = x
    for i in range(n_layers - 1):
        h = np.maximum(h @ p[f"W{i}"] + p[f"b{i}"], 0.0)
        acts.append(h)
    last = n_layers - 1
    y = _activate(h @ p[f"W{last}"] + p[f"b{last}"], spec.output_activation)
    return y, acts, p


def mlp_forward(params: NetworkParams, spec: MlpSpec, x) -> np.ndarray:
    y, _, _ = _forward(params, spec, _check_input(spec, x))
    return y


def mlp_backward(params: NetworkParams, spec: MlpSpec, x, targets) -> tuple[float, np.ndarray]:
    """Loss ``mean_batch ||y - target||^2`` and its gradient w.r.t. ``params.theta``."""
    x = _check_input(spec, x)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (x.shape[0], spec.output_dim):
        raise ShapeMismatch(f"targets shape {targets.shape} != {(x.shape[0], spec.output_dim)}")
    y, acts, p = _forward(params, spec, x)
    diff = y - targets
    batch = x.shape[0]
    loss = float(np.sum(diff * diff) / batch)

    flat, g = params.zeros_like()
    delta = (2.0 / batch) * diff * _activation_grad(y, spec.output_activation)
    for i in range(spec.n_hidden_layers, -1, -1):
        g[f"W{i}"][...] = acts[i].T @ delta
        g[f"b{i}"][...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p[f"W{i}"].T) * (acts[i] > 0.0)
    return loss, flat
