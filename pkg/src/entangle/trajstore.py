"""Demonstration corpora: in-memory model and on-disk format.

A dataset directory holds ``manifest.json`` plus one headerless blob per
matrix (IEEE-754 binary32, little-endian, row-major ``frames x dim``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimMismatch,
    InvalidTrajectory,
    IoFailure,
    MalformedManifest,
    MissingFile,
    NonFinite,
    SizeMismatch,
    TooFewDemos,
)

FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype("<f4")
_KIND_DIMS = {"features": "feature_dim", "proprio": "proprio_dim", "actions": "action_dim"}


@dataclass(frozen=True)
class FeatureTrajectory:
    """One demonstration: per-frame features, proprioception and expert actions.

    ``actions[n]`` is the action the expert took after observing frame ``n``.
    Matrices are coerced to float32, the storage precision.
    """

    task_name: str
    demo_id: int
    features: np.ndarray
    proprio: np.ndarray
    actions: np.ndarray
    success: bool = True

    def __post_init__(self):
        for name in ("features", "proprio", "actions"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 2:
                raise DimMismatch(f"{name} of demo {self.demo_id} must be 2-D, got shape {arr.shape}")
            if arr.dtype != np.float32:
                arr = arr.astype(np.float32)
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"{name} of demo {self.demo_id} in task {self.task_name!r} has NaN/Inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.demo_id < 0:
            raise InvalidTrajectory(f"demo_id must be non-negative, got {self.demo_id}")
        n = self.features.shape[0]
        if self.proprio.shape[0] != n or self.actions.shape[0] != n:
            raise DimMismatch(
                f"frame counts differ in demo {self.demo_id}: features {n}, "
                f"proprio {self.proprio.shape[0]}, actions {self.actions.shape[0]}"
            )
        if n < 2:
            raise InvalidTrajectory(f"demo {self.demo_id} has {n} frames, need at least 2")
        if np.any(np.abs(self.actions) > 1.0):
            raise InvalidTrajectory(f"demo {self.demo_id} has actions outside [-1, 1]")

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class DatasetStats:
    n_tasks: int
    demos_per_task: list[int]
    frames_per_demo: list[int]
    total_frames: int


@dataclass
class DemoDataset:
    """Demonstrations grouped by task, in task insertion order.

    ``extra`` is free-form metadata echoed into the manifest (generators use
    it to record the world configuration).
    """

    demos: dict[str, list[FeatureTrajectory]]
    feature_dim: int
    proprio_dim: int
    action_dim: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.demos = {task: list(trajs) for task, trajs in self.demos.items()}
        for dim in (self.feature_dim, self.proprio_dim, self.action_dim):
            if dim <= 0:
                raise DimMismatch(f"dataset dims must be positive, got {dim}")
        for task, trajs in self.demos.items():
            for traj in trajs:
                got = (traj.features.shape[1], traj.proprio.shape[1], traj.actions.shape[1])
                want = (self.feature_dim, self.proprio_dim, self.action_dim)
                if got != want:
                    raise DimMismatch(f"demo {traj.demo_id} of {task!r} has dims {got}, dataset has {want}")

    @property
    def tasks(self) -> list[str]:
        return list(self.demos)

    @property
    def stats(self) -> DatasetStats:
        frames = [t.n_frames for trajs in self.demos.values() for t in trajs]
        return DatasetStats(
            n_tasks=len(self.demos),
            demos_per_task=[len(v) for v in self.demos.values()],
            frames_per_demo=frames,
            total_frames=sum(frames),
        )

    def trajectories(self):
        for trajs in self.demos.values():
            yield from trajs

    def validate(self) -> None:
        if not self.demos:
            raise MalformedManifest("dataset has no tasks")
        for task, trajs in self.demos.items():
            if not trajs:
                raise MalformedManifest(f"task {task!r} has no demos")


def merge_datasets(datasets: list[DemoDataset]) -> DemoDataset:
    """Concatenate datasets with disjoint task names into one multi-task corpus."""
    first = datasets[0]
    demos: dict[str, list[FeatureTrajectory]] = {}
    extra: dict = {"sources": []}
    for ds in datasets:
        if (ds.feature_dim, ds.proprio_dim, ds.action_dim) != (first.feature_dim, first.proprio_dim, first.action_dim):
            raise DimMismatch("cannot merge datasets with different dims")
        for task, trajs in ds.demos.items():
            if task in demos:
                raise MalformedManifest(f"duplicate task {task!r} in merge")
            demos[task] = trajs
        extra["sources"].append(ds.extra)
    return DemoDataset(demos, first.feature_dim, first.proprio_dim, first.action_dim, extra)


def _blob_name(task_index: int, demo_index: int, kind: str) -> str:
    return f"blobs/t{task_index:03d}_d{demo_index:06d}_{kind}.f32"


def save_dataset(dataset: DemoDataset, root_path) -> None:
    dataset.validate()
    root = Path(root_path)
    manifest = {
        "version": FORMAT_VERSION,
        "feature_dim": dataset.feature_dim,
        "proprio_dim": dataset.proprio_dim,
        "action_dim": dataset.action_dim,
        "tasks": [],
    }
    if dataset.extra:
        manifest["extra"] = dataset.extra
    try:
        (root / "blobs").mkdir(parents=True, exist_ok=True)
        for ti, (task, trajs) in enumerate(dataset.demos.items()):
            entries = []
            for di, traj in enumerate(trajs):
                entry = {"id": int(traj.demo_id), "frames": traj.n_frames, "success": bool(traj.success)}
                for kind in ("features", "proprio", "actions"):
                    rel = _blob_name(ti, di, kind)
                    arr = np.ascontiguousarray(getattr(traj, kind), dtype=_BLOB_DTYPE)
                    (root / rel).write_bytes(arr.tobytes(order="C"))
                    entry[kind] = rel
                entries.append(entry)
            manifest["tasks"].append({"name": task, "demos": entries})
        tmp = root / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
        os.replace(tmp, root / "manifest.json")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedManifest(f"missing key {key!r} in {where}")
    value = obj[key]
    # bool is an int subclass; keep the two apart
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise MalformedManifest(f"{where}.{key} must be an integer")
    if kind is not int and not isinstance(value, kind):
        raise MalformedManifest(f"{where}.{key} has wrong type {type(value).__name__}")
    return value


def _read_blob(root: Path, rel: str, frames: int, dim: int) -> np.ndarray:
    path = root / rel
    if not path.is_file():
        raise MissingFile(f"blob not found: {path}")
    data = path.read_bytes()
    expected = frames * dim * _BLOB_DTYPE.itemsize
    if len(data) != expected:
        raise SizeMismatch(f"{rel}: {len(data)} bytes, expected {frames}x{dim}x4 = {expected}")
    return np.frombuffer(data, dtype=_BLOB_DTYPE).reshape(frames, dim).astype(np.float32)


def load_dataset(root_path) -> DemoDataset:
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise MalformedManifest("manifest must be a JSON object")
    if _require(manifest, "version", int, "manifest") != FORMAT_VERSION:
        raise MalformedManifest(f"unsupported manifest version {manifest['version']}")
    dims = {k: _require(manifest, k, int, "manifest") for k in ("feature_dim", "proprio_dim", "action_dim")}
    if min(dims.values()) <= 0:
        raise MalformedManifest("dims must be positive")
    tasks = _require(manifest, "tasks", list, "manifest")
    if not tasks:
        raise MalformedManifest("manifest lists no tasks")

    demos: dict[str, list[FeatureTrajectory]] = {}
    for ti, task in enumerate(tasks):
        name = _require(task, "name", str, f"tasks[{ti}]")
        if name in demos:
            raise MalformedManifest(f"duplicate task name {name!r}")
        entries = _require(task, "demos", list, f"tasks[{ti}]")
        if not entries:
            raise MalformedManifest(f"task {name!r} has no demos")
        trajs = []
        for di, entry in enumerate(entries):
            where = f"tasks[{ti}].demos[{di}]"
            frames = _require(entry, "frames", int, where)
            if frames < 2:
                raise MalformedManifest(f"{where}.frames must be >= 2")
            mats = {
                kind: _read_blob(root, _require(entry, kind, str, where), frames, dims[dim_key])
                for kind, dim_key in _KIND_DIMS.items()
            }
            trajs.append(
                FeatureTrajectory(
                    task_name=name,
                    demo_id=_require(entry, "id", int, where),
                    success=_require(entry, "success", bool, where) if "success" in entry else True,
                    **mats,
                )
            )
        demos[name] = trajs
    extra = manifest.get("extra", {})
    if not isinstance(extra, dict):
        raise MalformedManifest("extra must be an object")
    return DemoDataset(demos, extra=extra, **dims)


def split_demos(dataset: DemoDataset, holdout_fraction: float, seed: int) -> tuple[DemoDataset, DemoDataset]:
    """Per-task random split into (train, holdout); both sides keep every task."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train: dict[str, list[FeatureTrajectory]] = {}
    hold: dict[str, list[FeatureTrajectory]] = {}
    for task, trajs in dataset.demos.items():
        n = len(trajs)
        if n < 2:
            raise TooFewDemos(f"task {task!r} has {n} demo(s); a split needs at least 2")
        n_hold = min(n - 1, max(1, int(round(n * holdout_fraction))))
        order = rng.permutation(n)
        held = set(order[:n_hold].tolist())
        hold[task] = [t for i, t in enumerate(trajs) if i in held]
        train[task] = [t for i, t in enumerate(trajs) if i not in held]
    dims = (dataset.feature_dim, dataset.proprio_dim, dataset.action_dim)
    return DemoDataset(train, *dims, extra=dict(dataset.extra)), DemoDataset(hold, *dims, extra=dict(dataset.extra))
