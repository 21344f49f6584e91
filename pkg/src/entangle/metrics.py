"""Temporal entanglement metrics over feature trajectories.

Short-range entanglement is the mean cosine similarity between consecutive
task-centred frames; long-range entanglement is the mean cosine similarity
between every ordered pair of distinct (uncentred) frames of a demo. Both pool
pairs across demos and tasks, so every pair carries equal weight regardless
of demo length. Computation is in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllPairsDegenerate, DegenerateVector, UnknownTask
from .trajstore import DemoDataset, FeatureTrajectory

NORM_EPS = 1e-12
NORMALIZATIONS = ("pairs", "paper")


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= NORM_EPS or nv <= NORM_EPS:
        raise DegenerateVector(f"cosine of a near-zero vector (norms {nu:.3g}, {nv:.3g})")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def task_center(dataset: DemoDataset, task: str) -> tuple[np.ndarray, list[np.ndarray]]:
    """Return the task's mean feature and every demo's features minus that mean."""
    if task not in dataset.demos:
        raise UnknownTask(f"unknown task {task!r}")
    mats = [t.features.astype(np.float64) for t in dataset.demos[task]]
    mean = np.concatenate(mats, axis=0).mean(axis=0)
    return mean, [m - mean for m in mats]


@dataclass
class RangeScore:
    """Pooled cosine statistic: global value plus per-task breakdown."""

    value: float
    per_task: dict[str, float]
    pair_counts: dict[str, int]
    skipped_pairs: int


def _row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def _finish(sums: dict, counts: dict, skipped: int, divisors: dict | None = None) -> RangeScore:
    total = sum(counts.values())
    if total == 0:
        raise AllPairsDegenerate("every frame pair involved a near-zero vector")
    div = divisors if divisors is not None else counts
    per_task = {t: (sums[t] / div[t] if div[t] else float("nan")) for t in sums}
    return RangeScore(
        value=float(sum(sums.values()) / sum(div.values())),
        per_task=per_task,
        pair_counts=dict(counts),
        skipped_pairs=skipped,
    )


def short_range_entanglement(dataset: DemoDataset, centered: bool = True, stride: int = 1) -> RangeScore:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sums, counts, skipped = {}, {}, 0
    for task, trajs in dataset.demos.items():
        if centered:
            _, mats = task_center(dataset, task)
        else:
            mats = [t.features.astype(np.float64) for t in trajs]
        s, c = 0.0, 0
        for x in mats:
            if x.shape[0] < stride + 1:
                raise ValueError(f"demo in {task!r} has {x.shape[0]} frames, stride {stride} needs more")
            a, b = x[:-stride], x[stride:]
            na, nb = _row_norms(a), _row_norms(b)
            ok = (na > NORM_EPS) & (nb > NORM_EPS)
            skipped += int((~ok).sum())
            cos = np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])
            s += float(np.clip(cos, -1.0, 1.0).sum())
            c += int(ok.sum())
        sums[task], counts[task] = s, c
    return _finish(sums, counts, skipped)


def long_range_entanglement(dataset: DemoDataset, normalization: str = "pairs", centered: bool = False) -> RangeScore:
    """Mean cosine over ordered pairs ``n != m`` within each demo.

    ``normalization="paper"`` divides the pooled sum by the total frame count
    instead of the pair count; that value is not confined to [-1, 1].
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    sums, counts, frames, skipped = {}, {}, {}, 0
    for task, trajs in dataset.demos.items():
        if centered:
            _, mats = task_center(dataset, task)
        else:
            mats = [t.features.astype(np.float64) for t in trajs]
        s, c, nf = 0.0, 0, 0
        for x in mats:
            n = x.shape[0]
            norms = _row_norms(x)
            ok = norms > NORM_EPS
            m = int(ok.sum())
            skipped += n * (n - 1) - m * (m - 1)
            u = x[ok] / norms[ok, None]
            gram = np.clip(u @ u.T, -1.0, 1.0)
            s += float(gram.sum() - np.trace(gram))
            c += m * (m - 1)
            nf += n
        sums[task], counts[task], frames[task] = s, c, nf
    return _finish(sums, counts, skipped, divisors=frames if normalization == "paper" else None)


@dataclass
class EntanglementReport:
    short_range: float
    long_range: float
    combined: float
    per_task: dict[str, tuple[float, float]]
    skipped_pairs: int
    normalization: str = "pairs"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "short_range": self.short_range,
            "long_range": self.long_range,
            "combined": self.combined,
            "normalization": self.normalization,
            "skipped_pairs": self.skipped_pairs,
            "per_task": {t: {"short": s, "long": l} for t, (s, l) in self.per_task.items()},
        }


def entanglement_report(
    dataset: DemoDataset,
    normalization: str = "pairs",
    centered: bool = True,
    stride: int = 1,
) -> EntanglementReport:
    """Short- and long-range scores plus their product.

    ``centered`` only affects the short-range metric; long-range is always
    computed on raw features.
    """
    short = short_range_entanglement(dataset, centered=centered, stride=stride)
    long = long_range_entanglement(dataset, normalization=normalization)
    return EntanglementReport(
        short_range=short.value,
        long_range=long.value,
        combined=short.value * long.value,
        per_task={t: (short.per_task[t], long.per_task[t]) for t in dataset.tasks},
        skipped_pairs=short.skipped_pairs + long.skipped_pairs,
        normalization=normalization,
    )


@dataclass
class PcaProjection:
    scores: np.ndarray  # frames x components
    variances: np.ndarray  # sample variance of each score column
    directions: np.ndarray  # components x feature_dim, unit rows
    rank_deficient: bool


def pca_project(trajectory: FeatureTrajectory | np.ndarray, components: int = 2) -> PcaProjection:
    """Project mean-centred frames onto their top principal directions.

    Works through the frames x frames Gram matrix, which is the small side
    for short demos with wide features. Each direction is signed so that its
    largest-magnitude loading is positive. When fewer than ``components``
    eigenvalues are nonzero, the missing columns are zero and
    ``rank_deficient`` is set.
    """
    x = trajectory.features if isinstance(trajectory, FeatureTrajectory) else trajectory
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if components < 1 or n < components + 1:
        raise ValueError(f"need more than {components} frames, got {n}")
    xc = x - x.mean(axis=0)
    evals, evecs = np.linalg.eigh(xc @ xc.T)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * 1e-12 * n + 1e-300
    rank = int((evals > tol).sum())

    scores = np.zeros((n, components))
    directions = np.zeros((components, d))
    variances = np.zeros(components)
    for k in range(min(rank, components)):
        sv = np.sqrt(evals[k])
        col = evecs[:, k] * sv
        direction = xc.T @ evecs[:, k] / sv
        if direction[np.argmax(np.abs(direction))] < 0:
            col, direction = -col, -direction
        scores[:, k] = col
        directions[k] = direction
        variances[k] = evals[k] / (n - 1)
    return PcaProjection(scores, variances, directions, rank < components)
