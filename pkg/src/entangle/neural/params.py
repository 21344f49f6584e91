"""Flat parameter storage, Adam, and binary checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import IoFailure, LengthMismatch, MalformedManifest, MissingFile


class NetworkParams:
    """All weights of one network in a single float64 vector.

    ``layout`` is an ordered list of ``(name, shape)``; ``params[name]``
    returns a writable view into ``theta``. Adam moments live alongside.
    """

    def __init__(self, layout: list[tuple[str, tuple[int, ...]]], theta: np.ndarray | None = None):
        self.layout = [(name, tuple(int(s) for s in shape)) for name, shape in layout]
        self._slices = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape)) if shape else 1
            self._slices[name] = (offset, offset + size, shape)
            offset += size
        self.size = offset
        if theta is None:
            theta = np.zeros(offset)
        elif theta.shape != (offset,):
            raise LengthMismatch(f"theta has length {theta.shape}, layout needs {offset}")
        self.theta = np.asarray(theta, dtype=np.float64)
        self.m = np.zeros(offset)
        self.v = np.zeros(offset)
        self.step = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.unflatten(self.theta)[name]

    def unflatten(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        return {name: vec[a:b].reshape(shape) for name, (a, b, shape) in self._slices.items()}

    def zeros_like(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        flat = np.zeros(self.size)
        return flat, self.unflatten(flat)

    def copy(self) -> "NetworkParams":
        other = NetworkParams(self.layout, self.theta.copy())
        other.m, other.v, other.step = self.m.copy(), self.v.copy(), self.step
        return other


def adam_step(
    params: NetworkParams,
    grad: np.ndarray,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> NetworkParams:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.theta.shape:
        raise LengthMismatch(f"gradient length {grad.shape} != parameter length {params.theta.shape}")
    params.step += 1
    params.m *= beta1
    params.m += (1.0 - beta1) * grad
    params.v *= beta2
    params.v += (1.0 - beta2) * grad * grad
    m_hat = params.m / (1.0 - beta1**params.step)
    v_hat = params.v / (1.0 - beta2**params.step)
    params.theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def save_checkpoint(path, params: NetworkParams, header: dict) -> None:
    """One JSON header line, then theta, m, v as little-endian float64."""
    head = dict(header)
    head["step"] = params.step
    head["layout"] = [[name, list(shape)] for name, shape in params.layout]
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
            for vec in (params.theta, params.m, params.v):
                fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise MissingFile(f"checkpoint not found: {path}") from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise MalformedManifest("checkpoint has no header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"bad checkpoint header: {exc}") from exc
    params = NetworkParams([(n, tuple(s)) for n, s in header["layout"]])
    body = np.frombuffer(data[nl + 1 :], dtype="<f8")
    if body.size != 3 * params.size:
        raise LengthMismatch(f"checkpoint body holds {body.size} values, expected {3 * params.size}")
    params.theta = body[: params.size].astype(np.float64)
    params.m = body[params.size : 2 * params.size].astype(np.float64)
    params.v = body[2 * params.size :].astype(np.float64)
    params.step = int(header["step"])
    return params, header
