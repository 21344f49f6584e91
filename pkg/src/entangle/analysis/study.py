"""Grid study over the entanglement knob, augmentations and seeds.

A manifest names the grid; every ``(lambda, variant, seed)`` group shares
one demo set, one entanglement report and one progression probe, and each
augmentation in the group gets its own BC policy. Seeds for every random
stream come from ``SeedSequence(manifest seed, ...)``, so a manifest
always produces the same report whether groups run serially or in a pool.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from ..errors import EntangleError, MalformedManifest, MissingFile
from ..metrics import entanglement_report
from ..neural import MlpSpec
from ..synthworld import VARIANTS, WorldConfig, generate_demos
from ..trajstore import merge_datasets
from .bc import AUGMENTATIONS, train_bc_policy
from .probe import train_progression_probe
from .stats import iqm, paired_t_test, pearson, wilcoxon_signed_rank

log = logging.getLogger(__name__)

CSV_COLUMNS = ("lambda", "variant", "aug", "seed", "success", "short", "long", "combined", "probe_loss")


@dataclass
class StudyManifest:
    lambdas: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    variants: list[str] = field(default_factory=lambda: ["pick_place"])
    augmentations: list[str] = field(default_factory=lambda: ["none", "flare", "te"])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    seed: int = 0
    demos: int = 25
    steps: int = 10_000
    batch: int = 128
    lr: float = 1e-4
    hidden_dim: int = 256
    episodes: int = 50
    probe_steps: int = 5000
    probe_lr: float = 1e-3
    probe_hidden_dim: int = 256
    feature_dim: int = 16
    obs_noise_sigma: float = 0.01
    episode_offset_sigma: float = 0.0
    max_steps: int = 100
    correlation_augmentation: str = "none"
    out: str | None = None

    def __post_init__(self):
        if not self.lambdas or not self.variants or not self.augmentations or not self.seeds:
            raise MalformedManifest("lambdas, variants, augmentations and seeds must be non-empty")
        for v in self.variants:
            if v not in VARIANTS:
                raise MalformedManifest(f"unknown variant {v!r}")
        for a in self.augmentations:
            if a not in AUGMENTATIONS:
                raise MalformedManifest(f"unknown augmentation {a!r}")
        for lam in self.lambdas:
            if not 0.0 <= lam <= 1.0:
                raise MalformedManifest(f"lambda {lam} outside [0, 1]")
        if self.obs_noise_sigma < 0 or self.episode_offset_sigma < 0:
            raise MalformedManifest("noise scales must be non-negative")

    @classmethod
    def from_json(cls, obj: dict) -> "StudyManifest":
        if not isinstance(obj, dict):
            raise MalformedManifest("study manifest must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise MalformedManifest(f"unknown manifest keys: {sorted(unknown)}")
        data = dict(obj)
        if isinstance(data.get("seeds"), int):
            data["seeds"] = list(range(data["seeds"]))
        try:
            return cls(**data)
        except TypeError as exc:
            raise MalformedManifest(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "StudyManifest":
        try:
            obj = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise MissingFile(f"study manifest not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise MalformedManifest(f"study manifest is not valid JSON: {exc}") from exc
        return cls.from_json(obj)


def derive_seed(root: int, *parts: int) -> int:
    return int(np.random.SeedSequence([root, *parts]).generate_state(1)[0])


@dataclass
class Cell:
    lam: float
    variant: str
    aug: str
    seed: int
    success: float
    short: float
    long: float
    combined: float
    probe_loss: float | None

    def row(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _run_group(args) -> list[Cell]:
    m, gi, li, variant, seed = args
    lam = m.lambdas[li]
    world = WorldConfig(
        variant=variant, feature_dim=m.feature_dim, lam=lam, obs_noise_sigma=m.obs_noise_sigma,
        episode_offset_sigma=m.episode_offset_sigma, max_steps=m.max_steps, seed=derive_seed(m.seed, 0, gi),
    )
    ds = generate_demos(world, m.demos)
    rep = entanglement_report(ds)
    probe_loss = None
    if m.probe_steps > 0:
        spec = MlpSpec(m.feature_dim, 1, hidden_dim=m.probe_hidden_dim, n_hidden_layers=2, output_activation="sigmoid")
        probe = train_progression_probe(ds, spec, steps=m.probe_steps, seed=derive_seed(m.seed, 1, gi), lr=m.probe_lr)
        probe_loss = probe.task_progression_loss
    eval_seed = derive_seed(m.seed, 2, gi)
    cells = []
    for aug in m.augmentations:
        ci = gi * len(AUGMENTATIONS) + AUGMENTATIONS.index(aug)
        res = train_bc_policy(
            ds, aug, steps=m.steps, batch=m.batch, lr=m.lr, seed=derive_seed(m.seed, 3, ci),
            hidden_dim=m.hidden_dim, episodes=m.episodes, eval_seed=eval_seed,
        )
        cells.append(Cell(lam, variant, aug, seed, res.success_rate, rep.short_range, rep.long_range, rep.combined, probe_loss))
        log.info("lambda=%g variant=%s seed=%d aug=%s success=%.3f", lam, variant, seed, aug, res.success_rate)
    return cells


def _safe(fn, *args) -> dict | None:
    try:
        return fn(*args).to_json()
    except EntangleError as exc:
        return {"omitted": True, "reason": exc.code}


def _correlations(cells: list[Cell], aug: str) -> dict:
    groups: dict[tuple, list[Cell]] = {}
    for c in cells:
        if c.aug == aug:
            groups.setdefault((c.lam, c.seed), []).append(c)
    keys = sorted(groups)
    success = [float(np.mean([c.success for c in groups[k]])) for k in keys]
    combined = [float(np.mean([c.combined for c in groups[k]])) for k in keys]
    out = {"augmentation": aug, "n": len(keys)}
    if len(keys) < 3:
        out["omitted"] = True
        out["reason"] = "fewer than 3 (lambda, seed) points"
        return out
    out["omitted"] = False
    out["combined_vs_success"] = _safe(pearson, combined, success)
    if all(c.probe_loss is not None for k in keys for c in groups[k]):
        probe = [float(np.mean([c.probe_loss for c in groups[k]])) for k in keys]
        out["probe_loss_vs_success"] = _safe(pearson, probe, success)
    else:
        out["probe_loss_vs_success"] = None
    return out


def _paired(cells: list[Cell], a: str, b: str, lam: float | None = None) -> dict | None:
    table = {(c.lam, c.variant, c.seed, c.aug): c.success for c in cells if lam is None or c.lam == lam}
    keys = sorted({k[:3] for k in table if (*k[:3], a) in table and (*k[:3], b) in table})
    if not keys:
        return None
    xa = [table[(*k, a)] for k in keys]
    xb = [table[(*k, b)] for k in keys]
    return {
        "n_pairs": len(keys),
        "mean_difference": float(np.mean(np.subtract(xa, xb))),
        "wilcoxon": _safe(wilcoxon_signed_rank, xa, xb),
        "paired_t": _safe(paired_t_test, xa, xb),
    }


def summarize(manifest: StudyManifest, cells: list[Cell]) -> dict:
    configs = {}
    for c in cells:
        configs.setdefault((c.lam, c.variant, c.aug), []).append(c.success)
    per_config = [
        {"lambda": lam, "variant": v, "aug": a, "n_seeds": len(s), "success_iqm": iqm(s), "success_mean": float(np.mean(s))}
        for (lam, v, a), s in sorted(configs.items(), key=lambda kv: (kv[0][0], kv[0][1], AUGMENTATIONS.index(kv[0][2])))
    ]
    aug = manifest.correlation_augmentation
    if aug not in manifest.augmentations:
        aug = manifest.augmentations[0]
    tests = {}
    for other in ("none", "flare"):
        if "te" in manifest.augmentations and other in manifest.augmentations:
            tests[f"te_vs_{other}"] = {
                "pooled": _paired(cells, "te", other),
                "per_lambda": {repr(lam): _paired(cells, "te", other, lam) for lam in manifest.lambdas},
            }
    # the output location is left out so reports written to different dirs compare equal
    echo = {k: v for k, v in asdict(manifest).items() if k != "out"}
    return {
        "manifest": echo,
        "cells": [c.row() for c in cells],
        "per_config": per_config,
        "correlations": _correlations(cells, aug),
        "paired_tests": tests,
    }


def cells_csv(cells: list[Cell]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for c in cells:
        row = c.row()
        writer.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def run_study(manifest: StudyManifest, out_dir=None, jobs: int = 1) -> dict:
    """Run every grid cell and return the report; write report.json and cells.csv if an output dir is given."""
    groups = []
    for li, lam in enumerate(manifest.lambdas):
        for variant in manifest.variants:
            for seed in manifest.seeds:
                groups.append((manifest, len(groups), li, variant, seed))
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(_run_group, groups)
    else:
        results = [_run_group(g) for g in groups]
    cells = [c for r in results for c in r]
    report = summarize(manifest, cells)
    out_dir = out_dir if out_dir is not None else manifest.out
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out / "cells.csv").write_text(cells_csv(cells))
    return report


def run_multitask_ct(
    lam: float = 1.0,
    seeds=(0, 1, 2),
    augmentations=("none", "te"),
    variants=VARIANTS,
    demos: int = 25,
    steps: int = 2000,
    lr: float = 1e-4,
    episodes: int = 50,
    obs_noise_sigma: float = 0.01,
    episode_offset_sigma: float = 0.0,
    long_dwell: tuple[int, int] | None = (3, 20),
    root_seed: int = 0,
) -> dict:
    """Train one causal-transformer policy on all tasks jointly, per augmentation and seed.

    The tasks are ``variants`` plus, when ``long_dwell`` is set, a second
    pick_place instance named ``pick_place_long`` whose expert dwells for a
    wider, randomized number of steps. Returns ``{aug: [mean success over
    tasks, one per seed]}`` plus the per-task breakdown under ``"per_task"``.
    """
    out = {a: [] for a in augmentations}
    per_task = {a: [] for a in augmentations}
    for seed in seeds:
        def world(variant, stream):
            return WorldConfig(
                variant=variant, lam=lam, obs_noise_sigma=obs_noise_sigma,
                episode_offset_sigma=episode_offset_sigma, seed=derive_seed(root_seed, stream, seed),
            )

        parts = [generate_demos(world(v, 10), demos) for v in variants]
        if long_dwell is not None:
            parts.append(generate_demos(world("pick_place", 13), demos, dwell=long_dwell, task="pick_place_long"))
        ds = merge_datasets(parts)
        for ai, aug in enumerate(augmentations):
            res = train_bc_policy(
                ds, aug, policy="ct", steps=steps, lr=lr, seed=derive_seed(root_seed, 11, seed, ai),
                episodes=episodes, eval_seed=derive_seed(root_seed, 12, seed),
            )
            out[aug].append(res.success_rate)
            per_task[aug].append(res.per_task_success)
    out["per_task"] = per_task
    return out
