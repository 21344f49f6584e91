"""Rollout-timestep encoding and frame-history feature augmentation.

The timestep encoding maps an integer step ``n`` to interleaved sine/cosine
pairs with angles ``theta_k = 2**k * pi * n / scale**k`` for bands
``k = 0..bands-1``. With the default scale of 100 the frequencies shrink
geometrically; band 0 is ``(sin(pi n), cos(pi n))``, which for integer ``n``
is always ``(0, +-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEDULES = ("decay", "classic")


@dataclass(frozen=True)
class TemporalEncodingConfig:
    bands: int = 32
    scale: float = 100.0
    # "classic" swaps in the transformer schedule n / 10000**(k / bands); ablations only
    schedule: str = "decay"

    def __post_init__(self):
        if self.bands < 1:
            raise ValueError("bands must be positive")
        if not self.scale > 1.0:
            raise ValueError("scale must exceed 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")

    @property
    def output_dim(self) -> int:
        return 2 * self.bands

    def angular_rates(self) -> np.ndarray:
        k = np.arange(self.bands, dtype=np.float64)
        if self.schedule == "classic":
            return 1.0 / 10000.0 ** (k / self.bands)
        return np.pi * (2.0 / self.scale) ** k


def temporal_encode(n, config: TemporalEncodingConfig = TemporalEncodingConfig()) -> np.ndarray:
    """Encode one timestep (-> ``[2B]``) or an array of timesteps (-> ``[len, 2B]``)."""
    steps = np.asarray(n)
    if np.any(steps < 0):
        raise ValueError("timesteps must be non-negative")
    theta = steps.astype(np.float64)[..., None] * config.angular_rates()
    out = np.empty(theta.shape[:-1] + (config.output_dim,))
    out[..., 0::2] = np.sin(theta)
    out[..., 1::2] = np.cos(theta)
    return out


def augment_with_te(features, proprio, config: TemporalEncodingConfig = TemporalEncodingConfig(), start: int = 0) -> np.ndarray:
    """Per frame n: ``concat(features[n], proprio[n], gamma(start + n))``."""
    features = np.asarray(features)
    proprio = np.asarray(proprio)
    n = np.arange(start, start + features.shape[0])
    return np.concatenate(
        [features.astype(np.float64), proprio.astype(np.float64), temporal_encode(n, config)], axis=1
    )


@dataclass(frozen=True)
class FlareConfig:
    history: int = 3
    include_differences: bool = True

    def __post_init__(self):
        if self.history < 1:
            raise ValueError("history must be >= 1")

    def output_dim(self, feature_dim: int) -> int:
        blocks = 2 * self.history - 1 if self.include_differences else self.history
        return blocks * feature_dim


def flare_stack(window: np.ndarray, config: FlareConfig = FlareConfig()) -> np.ndarray:
    """Build the augmented vector from an oldest-first window ``[..., H, d]``."""
    blocks = [window[..., i, :] for i in range(config.history)]
    if config.include_differences:
        blocks += [window[..., i + 1, :] - window[..., i, :] for i in range(config.history - 1)]
    return np.concatenate(blocks, axis=-1)


def augment_with_flare(features, config: FlareConfig = FlareConfig()) -> np.ndarray:
    """Stack each frame with its ``H-1`` predecessors and their differences.

    Blocks are oldest first: for H=3, ``(f[t-2], f[t-1], f[t], f[t-1]-f[t-2],
    f[t]-f[t-1])``. Indices before the episode start repeat frame 0.
    """
    f = np.asarray(features, dtype=np.float64)
    t = np.arange(f.shape[0])
    idx = np.maximum(t[:, None] - np.arange(config.history - 1, -1, -1)[None, :], 0)
    return flare_stack(f[idx], config)
