"""Latent-level manipulation worlds with a tunable feature-entanglement knob.

The world state is an effector height ``h``, a gripper closure ``g`` and an
object height ``b``. Observations play the role of a frozen image encoder:

    features = M @ ((1 - lam) * e_inj + lam * e_alias) + noise
    e_inj    = (h, g, b, onehot(phase))
    e_alias  = (h, 0.1 g, 0.1 b, 0, 0, 0, 0)

with ``M`` a seeded ``feature_dim x 7`` matrix with orthonormal columns.
At ``lam = 1`` the task phase is erased and the gripper/object channels are
faint, so descent and ascent frames at the same height nearly coincide.
Proprioception is the effector height alone.

Everything is vectorised over a batch of episodes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ExpertFailure
from .trajstore import DemoDataset, FeatureTrajectory

VARIANTS = ("pick_place", "push", "reach")
DESCEND, GRASP, ASCEND, DONE = 0, 1, 2, 3
PHASES = ("DESCEND", "GRASP", "ASCEND", "DONE")

H_GAIN = 0.05
G_GAIN = 0.25
CONTACT = 0.05
GRIP_CLOSED = 0.8
LIFT_TARGET = 0.9
REACH_TARGET = 0.02
START_H = 0.5
PUSH_OBJECT_START = 0.3
ALIAS_WEIGHT = 0.1
# expert speed v maps to action magnitude v / SPEED_REF so the fastest demo moves at full gain
SPEED_REF = 0.07

ACTION_DIM = 2
PROPRIO_DIM = 1
LATENT_DIM = 7


@dataclass(frozen=True)
class WorldConfig:
    variant: str = "pick_place"
    feature_dim: int = 16
    lam: float = 0.0
    obs_noise_sigma: float = 0.01
    max_steps: int = 100
    seed: int = 0
    # std of a per-episode feature offset held fixed for the whole episode (0 disables)
    episode_offset_sigma: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.feature_dim < 8:
            raise ValueError("feature_dim must be >= 8")
        if self.obs_noise_sigma < 0 or self.episode_offset_sigma < 0 or self.max_steps < 1:
            raise ValueError("noise must be non-negative and max_steps positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_json(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass
class WorldState:
    """Batched world state; every field is an array of shape ``(batch,)``."""

    h: np.ndarray
    g: np.ndarray
    b: np.ndarray
    phase: np.ndarray
    step: np.ndarray

    @classmethod
    def initial(cls, variant: str, batch: int = 1) -> "WorldState":
        b0 = PUSH_OBJECT_START if variant == "push" else 0.0
        return cls(
            h=np.full(batch, START_H),
            g=np.zeros(batch),
            b=np.full(batch, b0),
            phase=np.full(batch, DESCEND, dtype=np.int64),
            step=np.zeros(batch, dtype=np.int64),
        )

    def copy(self) -> "WorldState":
        return WorldState(self.h.copy(), self.g.copy(), self.b.copy(), self.phase.copy(), self.step.copy())


def _as_state(state: WorldState) -> WorldState:
    return WorldState(*(np.atleast_1d(np.asarray(getattr(state, f))).copy() for f in ("h", "g", "b", "phase", "step")))


def step(state: WorldState, action, variant: str = "pick_place") -> tuple[WorldState, np.ndarray]:
    """Advance every episode by one action; episodes in DONE stay frozen."""
    s = _as_state(state)
    a = np.clip(np.asarray(action, dtype=np.float64).reshape(-1, ACTION_DIM), -1.0, 1.0)
    live = s.phase != DONE
    dh, dg = a[:, 0], a[:, 1]

    h_new = np.clip(s.h + H_GAIN * dh, 0.0, 1.0)
    g_new = np.clip(s.g + G_GAIN * dg, 0.0, 1.0)
    b_new = s.b.copy()
    touching = (g_new > GRIP_CLOSED) & (np.abs(s.h - s.b) < CONTACT)
    if variant == "pick_place":
        b_new = np.where(touching, h_new, s.b)
        success = (b_new >= LIFT_TARGET) & (g_new > GRIP_CLOSED)
    elif variant == "push":
        b_new = np.where(touching, np.clip(s.b + H_GAIN * dh, 0.0, 1.0), s.b)
        success = b_new >= LIFT_TARGET
    else:
        success = h_new <= REACH_TARGET

    phase = s.phase.copy()
    if variant != "reach":
        phase = np.where((phase == DESCEND) & (h_new < CONTACT), GRASP, phase)
        phase = np.where((phase == GRASP) & (dh > 0) & (g_new > GRIP_CLOSED), ASCEND, phase)
    phase = np.where(success, DONE, phase)

    out = WorldState(
        h=np.where(live, h_new, s.h),
        g=np.where(live, g_new, s.g),
        b=np.where(live, b_new, s.b),
        phase=np.where(live, phase, s.phase),
        step=np.where(live, s.step + 1, s.step),
    )
    return out, success & live


def projection_matrix(config: WorldConfig) -> np.ndarray:
    """Seeded ``feature_dim x 7`` map with orthonormal columns, distinct per variant."""
    rng = np.random.default_rng([config.seed, VARIANTS.index(config.variant), 0x5EED])
    q, r = np.linalg.qr(rng.standard_normal((config.feature_dim, LATENT_DIM)))
    return q * np.sign(np.diag(r))


def latent_code(state: WorldState, lam: float) -> np.ndarray:
    s = _as_state(state)
    onehot = np.eye(4)[s.phase]
    inj = np.column_stack([s.h, s.g, s.b, onehot])
    alias = np.column_stack([s.h, ALIAS_WEIGHT * s.g, ALIAS_WEIGHT * s.b, np.zeros((len(s.h), 4))])
    return (1.0 - lam) * inj + lam * alias


def observe(state: WorldState, config: WorldConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Feature vectors ``(batch, feature_dim)``; noise is drawn from ``rng`` when given."""
    feats = latent_code(state, config.lam) @ projection_matrix(config).T
    if rng is not None and config.obs_noise_sigma > 0:
        feats = feats + rng.normal(0.0, config.obs_noise_sigma, size=feats.shape)
    return feats


def proprioception(state: WorldState) -> np.ndarray:
    return _as_state(state).h[:, None].copy()


class ScriptedExpert:
    """Privileged controller that reads the true world state.

    Each episode gets a speed ``v`` from ``speed_range`` and a dwell ``K`` from
    ``dwell_range``; pick/push close the gripper (4 steps), hold for ``K``
    more steps, then rise.
    """

    def __init__(self, variant: str, batch: int, rng: np.random.Generator,
                 speed_range=(0.03, 0.07), dwell_range=(3, 8)):
        self.variant = variant
        lo, hi = speed_range
        self.speed = rng.uniform(lo, hi, size=batch) if hi > lo else np.full(batch, float(lo))
        klo, khi = dwell_range
        self.dwell = rng.integers(klo, khi + 1, size=batch)
        self.held = np.zeros(batch, dtype=np.int64)
        self.env = None

    def bind_env(self, env: "SynthEnv") -> None:
        self.env = env

    def act(self, state: WorldState) -> np.ndarray:
        mag = np.minimum(self.speed / SPEED_REF, 1.0)
        batch = len(state.h)
        action = np.zeros((batch, ACTION_DIM))
        if self.variant == "reach":
            action[:, 0] = -mag
            return action
        at_bottom = state.h <= 1e-9
        descending = ~at_bottom & (self.held == 0) & (state.g < 1.0)
        closing = at_bottom & (state.g < 1.0)
        holding = ~descending & ~closing & (self.held < self.dwell)
        lifting = ~descending & ~closing & ~holding
        action[descending, 0] = -mag[descending]
        action[closing | holding | lifting, 1] = 1.0
        action[lifting, 0] = mag[lifting]
        self.held += holding
        return action

    def __call__(self, features, proprio, timestep):
        return self.act(self.env.state)


class SynthEnv:
    """A batch of episodes sharing one configuration."""

    def __init__(self, config: WorldConfig, batch: int, noise_rng: np.random.Generator):
        self.config = config
        self.state = WorldState.initial(config.variant, batch)
        self.rng = noise_rng
        self.succeeded = np.zeros(batch, dtype=bool)
        self.offset = None
        if config.episode_offset_sigma > 0:
            self.offset = noise_rng.normal(0.0, config.episode_offset_sigma, size=(batch, config.feature_dim))

    def observe(self):
        feats = observe(self.state, self.config, self.rng)
        if self.offset is not None:
            feats = feats + self.offset
        return feats, proprioception(self.state)

    def step(self, action):
        self.state, success = step(self.state, action, self.config.variant)
        self.succeeded |= success
        return success


def generate_demos(
    config: WorldConfig,
    n_demos: int,
    jitter: tuple[float, float] = (0.03, 0.07),
    dwell: tuple[int, int] = (3, 8),
    task: str | None = None,
) -> DemoDataset:
    """Roll out the scripted expert ``n_demos`` times as a single task.

    The task is named after the variant unless ``task`` is given, which lets
    several instances of one variant (say, with different dwell ranges) sit
    side by side in a merged dataset.
    """
    if n_demos < 1:
        raise ValueError("n_demos must be >= 1")
    rng = np.random.default_rng([config.seed, VARIANTS.index(config.variant), 1])
    env = SynthEnv(config, n_demos, rng)
    expert = ScriptedExpert(config.variant, n_demos, rng, jitter, dwell)
    feats, props, acts = [], [], []
    length = np.full(n_demos, -1)
    for t in range(config.max_steps):
        f, p = env.observe()
        a = expert.act(env.state)
        feats.append(f)
        props.append(p)
        acts.append(a)
        env.step(a)
        length[(length < 0) & env.succeeded] = t + 1
        if env.succeeded.all():
            break
    if not env.succeeded.all():
        raise ExpertFailure(f"expert failed on {int((~env.succeeded).sum())} of {n_demos} demos")
    feats, props, acts = np.stack(feats, 1), np.stack(props, 1), np.stack(acts, 1)
    task = config.variant if task is None else task
    trajs = [
        FeatureTrajectory(task, i, feats[i, : length[i]], props[i, : length[i]], acts[i, : length[i]], True)
        for i in range(n_demos)
    ]
    extra = {"world": config.to_json(), "jitter": list(jitter), "dwell": list(dwell), "n_demos": n_demos, "task": task}
    return DemoDataset({task: trajs}, config.feature_dim, PROPRIO_DIM, ACTION_DIM, extra)


def evaluate_policy(policy, config: WorldConfig, n_episodes: int, seed: int | None = None, return_outcomes: bool = False):
    """Closed-loop success rate of ``policy(features, proprio, timestep) -> actions``.

    The policy sees a batch of ``n_episodes`` rows per call. Observation noise
    is fresh (independent of demo generation) and determined by ``seed``
    (defaults to the world seed). Policies exposing ``reset(batch)`` or
    ``bind_env(env)`` get those hooks called before the first step.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    eval_seed = config.seed if seed is None else seed
    rng = np.random.default_rng([eval_seed, VARIANTS.index(config.variant), 2])
    env = SynthEnv(config, n_episodes, rng)
    if hasattr(policy, "reset"):
        policy.reset(n_episodes)
    if hasattr(policy, "bind_env"):
        policy.bind_env(env)
    for t in range(config.max_steps):
        f, p = env.observe()
        action = np.asarray(policy(f, p, t), dtype=np.float64).reshape(n_episodes, ACTION_DIM)
        env.step(np.clip(action, -1.0, 1.0))
        if env.succeeded.all():
            break
    rate = float(env.succeeded.mean())
    return (rate, env.succeeded.copy()) if return_outcomes else rate


def expert_policy(config: WorldConfig, n_episodes: int, seed: int = 0, **kwargs) -> ScriptedExpert:
    return ScriptedExpert(config.variant, n_episodes, np.random.default_rng(seed), **kwargs)
