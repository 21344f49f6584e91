"""Behaviour cloning on feature trajectories, with optional temporal augmentation.

Policy input per frame is ``concat(features', proprio[, gamma(n)])`` where
``features'`` is either the raw features or their FLARE stack. The causal
transformer consumes a window of such tokens (oldest first, padded at the
episode start by repeating the oldest frame) and emits a chunk of actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimMismatch, ShapeMismatch
from ..neural import (
    CausalTransformerSpec,
    MlpSpec,
    NetworkParams,
    adam_step,
    ct_backward,
    ct_forward,
    init_ct,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from ..synthworld import WorldConfig, evaluate_policy
from ..tempenc import FlareConfig, TemporalEncodingConfig, augment_with_flare, flare_stack, temporal_encode
from ..trajstore import DemoDataset

AUGMENTATIONS = ("none", "flare", "te", "flare_te")
POLICIES = ("mlp", "ct")


@dataclass(frozen=True)
class Augmentation:
    kind: str = "none"
    te: TemporalEncodingConfig = TemporalEncodingConfig()
    flare: FlareConfig = FlareConfig()

    def __post_init__(self):
        if self.kind not in AUGMENTATIONS:
            raise ValueError(f"augmentation must be one of {AUGMENTATIONS}")

    @property
    def uses_flare(self) -> bool:
        return self.kind in ("flare", "flare_te")

    @property
    def uses_te(self) -> bool:
        return self.kind in ("te", "flare_te")

    def input_dim(self, feature_dim: int, proprio_dim: int) -> int:
        dim = self.flare.output_dim(feature_dim) if self.uses_flare else feature_dim
        return dim + proprio_dim + (self.te.output_dim if self.uses_te else 0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "bands": self.te.bands, "scale": self.te.scale, "history": self.flare.history}

    @classmethod
    def from_json(cls, d: dict) -> "Augmentation":
        return cls(d["kind"], TemporalEncodingConfig(d["bands"], d["scale"]), FlareConfig(d["history"]))


def build_inputs(features, proprio, aug: Augmentation) -> np.ndarray:
    """Policy inputs for one whole trajectory, frame ``n`` at row ``n``."""
    f = augment_with_flare(features, aug.flare) if aug.uses_flare else np.asarray(features, dtype=np.float64)
    parts = [f, np.asarray(proprio, dtype=np.float64)]
    if aug.uses_te:
        parts.append(temporal_encode(np.arange(f.shape[0]), aug.te))
    return np.concatenate(parts, axis=1)


class OnlineInputs:
    """Builds the same inputs as ``build_inputs`` one timestep at a time for a batch of episodes."""

    def __init__(self, aug: Augmentation):
        self.aug = aug
        self.window = None

    def reset(self, batch: int) -> None:
        self.window = None

    def __call__(self, features, proprio, timestep: int) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        if self.aug.uses_flare:
            if timestep == 0 or self.window is None:
                self.window = np.repeat(f[:, None, :], self.aug.flare.history, axis=1)
            else:
                self.window = np.concatenate([self.window[:, 1:], f[:, None, :]], axis=1)
            f = flare_stack(self.window, self.aug.flare)
        parts = [f, np.asarray(proprio, dtype=np.float64)]
        if self.aug.uses_te:
            parts.append(np.broadcast_to(temporal_encode(timestep, self.aug.te), (f.shape[0], self.aug.te.output_dim)))
        return np.concatenate(parts, axis=1)


class MlpPolicy:
    def __init__(self, params: NetworkParams, spec: MlpSpec, aug: Augmentation):
        self.params, self.spec, self.aug = params, spec, aug
        self.inputs = OnlineInputs(aug)

    def reset(self, batch: int) -> None:
        self.inputs.reset(batch)

    def __call__(self, features, proprio, timestep):
        return mlp_forward(self.params, self.spec, self.inputs(features, proprio, timestep))


class CtPolicy:
    """Runs the transformer on a sliding context and executes its action chunks.

    By default a whole chunk is executed before re-planning; with
    ``receding_horizon`` only the first action of each chunk is used.
    """

    def __init__(self, params: NetworkParams, spec: CausalTransformerSpec, aug: Augmentation, receding_horizon: bool = False):
        self.params, self.spec, self.aug = params, spec, aug
        self.receding_horizon = receding_horizon
        self.inputs = OnlineInputs(aug)
        self.context = None
        self.plan = None
        self.cursor = 0

    def reset(self, batch: int) -> None:
        self.inputs.reset(batch)
        self.context = None
        self.plan = None

    def __call__(self, features, proprio, timestep):
        token = self.inputs(features, proprio, timestep)
        if timestep == 0 or self.context is None:
            self.context = np.repeat(token[:, None, :], self.spec.context_len, axis=1)
        else:
            self.context = np.concatenate([self.context[:, 1:], token[:, None, :]], axis=1)
        if self.plan is None or self.receding_horizon or self.cursor >= self.spec.chunk_len:
            self.plan = ct_forward(self.params, self.spec, self.context)
            self.cursor = 0
        action = self.plan[:, self.cursor]
        self.cursor += 1
        return action


def progression_targets(n_frames: int) -> np.ndarray:
    return np.arange(n_frames, dtype=np.float64) / (n_frames - 1)


def context_windows(inputs: np.ndarray, context_len: int) -> np.ndarray:
    """``[N, context_len, d]`` windows ending at each frame, padded with frame 0."""
    t = np.arange(inputs.shape[0])
    idx = np.maximum(t[:, None] - np.arange(context_len - 1, -1, -1)[None, :], 0)
    return inputs[idx]


def chunk_targets(actions: np.ndarray, chunk_len: int) -> np.ndarray:
    """``[N, chunk_len, a]`` future actions from each frame; past the end the last action repeats."""
    n = actions.shape[0]
    idx = np.minimum(np.arange(n)[:, None] + np.arange(chunk_len)[None, :], n - 1)
    return np.asarray(actions, dtype=np.float64)[idx]


@dataclass
class BcResult:
    policy_kind: str
    augmentation: Augmentation
    params: NetworkParams
    spec: object
    loss_curve: list[float]
    success_rate: float | None = None
    per_task_success: dict[str, float] = field(default_factory=dict)

    def make_policy(self, receding_horizon: bool = False):
        if self.policy_kind == "ct":
            return CtPolicy(self.params, self.spec, self.augmentation, receding_horizon)
        return MlpPolicy(self.params, self.spec, self.augmentation)


def _training_arrays(dataset: DemoDataset, aug: Augmentation, policy: str, ct_spec: CausalTransformerSpec | None):
    xs, ys = [], []
    for traj in dataset.trajectories():
        inputs = build_inputs(traj.features, traj.proprio, aug)
        if policy == "ct":
            xs.append(context_windows(inputs, ct_spec.context_len))
            ys.append(chunk_targets(traj.actions, ct_spec.chunk_len).reshape(inputs.shape[0], -1))
        else:
            xs.append(inputs)
            ys.append(np.asarray(traj.actions, dtype=np.float64))
    return np.concatenate(xs), np.concatenate(ys)


def world_configs(dataset: DemoDataset) -> dict[str, WorldConfig]:
    """Per-task world configs recorded by the synthetic generator, if any."""
    sources = dataset.extra.get("sources", [dataset.extra])
    out = {}
    for src in sources:
        if "world" in src:
            cfg = WorldConfig.from_json(src["world"])
            out[src.get("task", cfg.variant)] = cfg
    return {t: out[t] for t in dataset.tasks if t in out}


def fit(params, loss_and_grad, x, y, steps: int, batch: int, lr: float, rng, log_every: int = 100) -> list[float]:
    """Adam on uniformly sampled mini-batches; returns the logged training losses."""
    curve = []
    running, count = 0.0, 0
    for i in range(steps):
        idx = rng.integers(0, x.shape[0], size=batch)
        loss, grad = loss_and_grad(params, x[idx], y[idx])
        adam_step(params, grad, lr=lr)
        running += loss
        count += 1
        if (i + 1) % log_every == 0 or i + 1 == steps:
            curve.append(running / count)
            running, count = 0.0, 0
    return curve


def train_bc_policy(
    dataset: DemoDataset,
    augmentation: str | Augmentation = "none",
    policy: str = "mlp",
    steps: int = 10_000,
    batch: int = 128,
    lr: float = 1e-4,
    seed: int = 0,
    hidden_dim: int = 256,
    n_hidden_layers: int = 4,
    ct_overrides: dict | None = None,
    episodes: int = 50,
    eval_seed: int | None = None,
    worlds: dict[str, WorldConfig] | None = None,
) -> BcResult:
    """Fit a policy by MSE regression on expert actions, then roll it out.

    Evaluation runs ``episodes`` closed-loop episodes per task whose world
    config is known (from ``worlds`` or the dataset's generator metadata);
    ``success_rate`` is the mean over tasks. ``episodes=0`` skips evaluation.
    """
    aug = augmentation if isinstance(augmentation, Augmentation) else Augmentation(augmentation)
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    in_dim = aug.input_dim(dataset.feature_dim, dataset.proprio_dim)
    rng = np.random.default_rng([seed, 11])

    if policy == "ct":
        spec = CausalTransformerSpec(input_dim=in_dim, action_dim=dataset.action_dim, **(ct_overrides or {}))
        params = init_ct(spec, seed)
        step_fn = lambda p, xb, yb: ct_backward(p, spec, xb, yb)  # noqa: E731
    else:
        spec = MlpSpec(in_dim, dataset.action_dim, hidden_dim=hidden_dim, n_hidden_layers=n_hidden_layers)
        params = init_mlp(spec, seed)
        step_fn = lambda p, xb, yb: mlp_backward(p, spec, xb, yb)  # noqa: E731

    x, y = _training_arrays(dataset, aug, policy, spec if policy == "ct" else None)
    if x.shape[-1] != in_dim:
        raise DimMismatch(f"augmented input has {x.shape[-1]} columns, policy expects {in_dim}")
    curve = fit(params, step_fn, x, y, steps, batch, lr, rng) if steps > 0 else []
    result = BcResult(policy, aug, params, spec, curve)

    if episodes > 0:
        worlds = worlds if worlds is not None else world_configs(dataset)
        for task, cfg in worlds.items():
            result.per_task_success[task] = evaluate_policy(result.make_policy(), cfg, episodes, seed=eval_seed)
        if result.per_task_success:
            result.success_rate = float(np.mean(list(result.per_task_success.values())))
    return result


def check_input_dim(spec, aug: Augmentation, feature_dim: int, proprio_dim: int) -> None:
    if spec.input_dim != aug.input_dim(feature_dim, proprio_dim):
        raise ShapeMismatch("checkpoint input dim does not match the augmentation and world dims")
