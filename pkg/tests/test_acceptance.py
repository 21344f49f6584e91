"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the slow criteria
(5 to 8 and 10) can be skipped with ``-m "not slow"``.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import dataset_from_features
from test_metrics import _random_features, oracle_long, oracle_short
from test_neural import _ct_case, _mlp_case
from test_stats import enumerate_signed_rank_p
from entangle.analysis.probe import train_progression_probe
from entangle.analysis.stats import iqm, paired_t_test, student_t_cdf, wilcoxon_signed_rank
from entangle.analysis.study import run_multitask_ct
from entangle.cli import main
from entangle.metrics import long_range_entanglement, short_range_entanglement
from entangle.neural import bind, ct_backward, grad_check, mlp_backward
from entangle.synthworld import WorldConfig, generate_demos
from entangle.tempenc import temporal_encode

# world used by the behaviour-cloning criteria: mild per-frame noise plus a
# per-episode feature offset
NOISE = 0.05
OFFSET = 0.1
LAMBDAS = [0.0, 0.25, 0.5, 0.75, 1.0]

TE_STUDY = dict(
    lambdas=[1.0], augmentations=["none", "flare", "te"], seeds=5, demos=25, steps=2000, batch=128, lr=1e-3,
    hidden_dim=128, episodes=50, probe_steps=0, obs_noise_sigma=NOISE, episode_offset_sigma=OFFSET,
)
GRID_STUDY = dict(TE_STUDY, lambdas=LAMBDAS, augmentations=["none"], probe_steps=2000)


def verdict(capsys, number, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    passed = bool(ok) and within
    timing = f"{elapsed:.1f}s" + ("" if limit is None else f" (limit {limit:.0f}s)")
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail} | {timing}"
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


def run_cli_study(manifest, out):
    out.mkdir(parents=True, exist_ok=True)
    (out / "m.json").write_text(json.dumps(manifest))
    start = time.perf_counter()
    code = main(["study", "--manifest", str(out / "m.json"), "--seed", "7", "--out", str(out), "--quiet"])
    elapsed = time.perf_counter() - start
    assert code == 0
    return json.loads((out / "report.json").read_text()), elapsed


@pytest.fixture(scope="module")
def te_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("te_study")
    report, elapsed = run_cli_study(TE_STUDY, out)
    return out, report, elapsed


@pytest.fixture(scope="module")
def grid_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid_study")
    report, elapsed = run_cli_study(GRID_STUDY, out)
    return report, elapsed


def test_criterion_1_metric_oracles(capsys):
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        per_task = _random_features(np.random.default_rng(k))
        ds = dataset_from_features(per_task)
        worst = max(
            worst,
            abs(short_range_entanglement(ds).value - oracle_short(per_task)),
            abs(long_range_entanglement(ds).value - oracle_long(per_task)),
        )
    verdict(capsys, 1, worst < 1e-9, f"max |metric - oracle| = {worst:.2e} over 100 datasets",
            time.perf_counter() - start, 5)


def test_criterion_2_worked_value(capsys):
    start = time.perf_counter()
    value = short_range_entanglement(dataset_from_features({"t": [[[1, 0], [0, 1], [-1, 0]]]})).value
    verdict(capsys, 2, abs(value - (-0.31623)) < 1e-4, f"short-range = {value:.6f}", time.perf_counter() - start)


def test_criterion_3_gradients(capsys):
    start = time.perf_counter()
    errs = []
    for k in range(20):
        params, spec, x, y = _mlp_case(k)
        errs.append(grad_check(bind(mlp_backward, params, spec, x, y), params.theta, h=1e-5, probes=30, seed=k))
        params, spec, x, y = _ct_case(k)
        errs.append(grad_check(bind(ct_backward, params, spec, x, y), params.theta, h=1e-5, probes=30, seed=k))
    worst = max(errs)
    verdict(capsys, 3, worst < 1e-4, f"max relative error {worst:.2e} over 20 MLP + 20 CT configs",
            time.perf_counter() - start, 60)


def test_criterion_4_temporal_encoding(capsys):
    start = time.perf_counter()
    zero = temporal_encode(0)
    ok_zero = zero.shape == (64,) and np.array_equal(zero, np.tile([0.0, 1.0], 32))
    big = temporal_encode(np.arange(0, 1_000_001, 7))
    ok_bounded = np.abs(big).max() <= 1.0
    g = temporal_encode(np.arange(501))
    sq = (g * g).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2 * g @ g.T
    np.fill_diagonal(d2, np.inf)
    ok_distinct = np.sqrt(np.maximum(d2, 0)).min() > 1e-6
    ok_band0 = np.abs(g[:, 0]).max() < 1e-9
    ok = ok_zero and ok_bounded and ok_distinct and ok_band0
    detail = f"zero={ok_zero} bounded={ok_bounded} distinct={ok_distinct} band0_sin~0={ok_band0}"
    verdict(capsys, 4, ok, detail, time.perf_counter() - start, 1)


@pytest.mark.slow
def test_criterion_5_probe(capsys):
    start = time.perf_counter()
    wins, pairs = 0, []
    for seed in range(10):
        losses = []
        for lam in (0.0, 1.0):
            cfg = WorldConfig(lam=lam, obs_noise_sigma=NOISE, episode_offset_sigma=OFFSET, seed=seed)
            losses.append(train_progression_probe(generate_demos(cfg, 25), steps=2000, seed=seed).task_progression_loss)
        wins += losses[0] < losses[1]
        pairs.append(losses)
    lengths = (20, 25, 30, 35, 40, 45, 50, 55, 60, 65)
    const = train_progression_probe(dataset_from_features({"t": [np.ones((n, 3)) for n in lengths]}), seed=0)
    ramps = []
    for n in lengths:
        p = np.arange(n) / (n - 1)
        ramps.append(np.column_stack([p, 1 - p, np.full(n, 0.5)]))
    ramp = train_progression_probe(dataset_from_features({"t": ramps}), seed=0)
    ok = wins == 10 and const.task_progression_loss >= 0.08 and ramp.task_progression_loss < 1e-3
    mean0, mean1 = np.mean(pairs, axis=0)
    detail = (f"lambda0 < lambda1 in {wins}/10 seeds (mean {mean0:.4f} vs {mean1:.4f}); "
              f"constant {const.task_progression_loss:.4f} >= 0.08; ramp {ramp.task_progression_loss:.2e} < 1e-3")
    verdict(capsys, 5, ok, detail, time.perf_counter() - start, 300)


@pytest.mark.slow
def test_criterion_6_te_gain(capsys, te_study):
    _, report, elapsed = te_study
    mean = {c["aug"]: c["success_mean"] for c in report["per_config"]}
    wil = report["paired_tests"]["te_vs_none"]["pooled"]["wilcoxon"]
    p = wil.get("p_two_sided", float("nan"))
    ok = mean["te"] >= mean["none"] + 0.20 and mean["te"] >= mean["flare"] + 0.05 and p < 0.1
    detail = f"none {mean['none']:.3f}, flare {mean['flare']:.3f}, te {mean['te']:.3f}; wilcoxon p = {p:.4f}"
    verdict(capsys, 6, ok, detail, elapsed, 15 * 60)


@pytest.mark.slow
def test_criterion_7_anticorrelation(capsys, te_study, grid_study):
    report, elapsed = grid_study
    corr = report["correlations"]
    r_comb = corr["combined_vs_success"].get("pearson_r", float("nan"))
    r_probe = corr["probe_loss_vs_success"].get("pearson_r", float("nan"))
    ok = r_comb < -0.5 and r_probe < -0.5
    means = " ".join(f"{c['lambda']}:{c['success_mean']:.2f}" for c in report["per_config"])
    detail = f"r(combined, success) = {r_comb:.3f}; r(probe, success) = {r_probe:.3f}; success by lambda {means}"
    verdict(capsys, 7, ok, detail, elapsed + te_study[2], 30 * 60)


@pytest.mark.slow
def test_criterion_8_ct_multitask(capsys):
    start = time.perf_counter()
    res = run_multitask_ct(seeds=(0, 1, 2), steps=2000, lr=1e-4, episodes=50,
                           obs_noise_sigma=NOISE, episode_offset_sigma=OFFSET)
    none, te = float(np.mean(res["none"])), float(np.mean(res["te"]))
    detail = f"CT {none:.3f} vs CT+TE {te:.3f} (gain {te - none:+.3f}) over 3 seeds, 4 tasks"
    verdict(capsys, 8, te >= none + 0.10, detail, time.perf_counter() - start, 20 * 60)


def test_criterion_9_statistics(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        d = rng.integers(-4, 5, size=n).astype(float)
        if not np.any(d):
            d[0] = 1.0
        worst = max(worst, abs(wilcoxon_signed_rank(d, np.zeros(n), method="exact").p_two_sided - enumerate_signed_rank_p(d)))
    t = paired_t_test([1, 1, 1, 2], [0, 0, 0, 0]).statistic
    cdf_err = 0.0
    for x in (-7.5, -1.0, -0.3, 0.0, 0.8, 1.0, math.sqrt(2), 3.0):
        cdf_err = max(
            cdf_err,
            abs(student_t_cdf(x, 1) - (0.5 + math.atan(x) / math.pi)),
            abs(student_t_cdf(x, 2) - (0.5 + x / (2 * math.sqrt(2 + x * x)))),
        )
    q = iqm([1, 2, 3, 4])
    ok = worst < 1e-12 and abs(t - 6.0) < 1e-9 and cdf_err < 1e-9 and q == 2.5
    detail = f"wilcoxon vs enumeration {worst:.1e}; paired t = {t:.6f} (expected 6.0); t-cdf err {cdf_err:.1e}; iqm {q}"
    verdict(capsys, 9, ok, detail, time.perf_counter() - start, 5)


@pytest.mark.slow
def test_criterion_10_determinism(capsys, te_study, tmp_path):
    first, _, _ = te_study
    _, elapsed = run_cli_study(TE_STUDY, tmp_path)
    same = {name: (tmp_path / name).read_bytes() == (first / name).read_bytes() for name in ("report.json", "cells.csv")}
    verdict(capsys, 10, all(same.values()), f"byte-identical {same}", elapsed)
