"""Task-progression probing of frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import MlpSpec, NetworkParams, init_mlp, mlp_backward, mlp_forward
from ..trajstore import DemoDataset, split_demos
from .bc import fit, progression_targets


@dataclass
class ProbeResult:
    task_progression_loss: float
    train_loss_curve: list[float]
    params: NetworkParams
    spec: MlpSpec

    def to_json(self) -> dict:
        return {"task_progression_loss": self.task_progression_loss, "train_loss_curve": self.train_loss_curve}


def _stack(dataset: DemoDataset) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for traj in dataset.trajectories():
        xs.append(traj.features.astype(np.float64))
        ys.append(progression_targets(traj.n_frames)[:, None])
    return np.concatenate(xs), np.concatenate(ys)


def train_progression_probe(
    dataset: DemoDataset,
    spec: MlpSpec | None = None,
    holdout_fraction: float = 0.2,
    steps: int = 5000,
    seed: int = 0,
    lr: float = 1e-3,
    batch: int = 128,
) -> ProbeResult:
    """Regress each frame's progression ``n / (N-1)`` from its features alone.

    One probe is trained on all tasks pooled; the reported loss is the
    per-frame MSE on held-out demos.
    """
    train, hold = split_demos(dataset, holdout_fraction, seed)
    if spec is None:
        spec = MlpSpec(dataset.feature_dim, 1, hidden_dim=256, n_hidden_layers=2, output_activation="sigmoid")
    params = init_mlp(spec, seed)
    x, y = _stack(train)
    rng = np.random.default_rng([seed, 13])
    curve = fit(params, lambda p, xb, yb: mlp_backward(p, spec, xb, yb), x, y, steps, batch, lr, rng)
    hx, hy = _stack(hold)
    pred = mlp_forward(params, spec, hx)
    loss = float(np.mean((pred - hy) ** 2))
    return ProbeResult(loss, curve, params, spec)
