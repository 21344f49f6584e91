import numpy as np
import pytest

from entangle.trajstore import DemoDataset, FeatureTrajectory


def random_dataset(rng, n_tasks=2, n_demos=3, frames=(2, 10), dims=(4, 2, 2)) -> DemoDataset:
    d, p, a = dims
    demos = {}
    for t in range(n_tasks):
        trajs = []
        for i in range(n_demos):
            n = int(rng.integers(frames[0], frames[1] + 1))
            trajs.append(
                FeatureTrajectory(
                    task_name=f"task{t}",
                    demo_id=i,
                    features=rng.normal(size=(n, d)),
                    proprio=rng.normal(size=(n, p)),
                    actions=rng.uniform(-1, 1, size=(n, a)),
                    success=bool(rng.integers(0, 2)),
                )
            )
        demos[f"task{t}"] = trajs
    return DemoDataset(demos, d, p, a)


def dataset_from_features(per_task: dict) -> DemoDataset:
    """Build a dataset from ``{task: [feature matrix, ...]}`` with dummy proprio/actions."""
    demos = {}
    dim = None
    for task, mats in per_task.items():
        trajs = []
        for i, f in enumerate(mats):
            f = np.asarray(f, dtype=np.float32)
            dim = f.shape[1]
            n = f.shape[0]
            trajs.append(FeatureTrajectory(task, i, f, np.zeros((n, 1)), np.zeros((n, 1))))
        demos[task] = trajs
    return DemoDataset(demos, dim, 1, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
