import json

import numpy as np
import pytest

from entangle.analysis.stats import pearson
from entangle.analysis.study import CSV_COLUMNS, StudyManifest, run_study
from entangle.errors import MalformedManifest, MissingFile

TINY = dict(
    lambdas=[0.0, 0.5, 1.0], seeds=[0, 1], augmentations=["none", "te"], demos=4, steps=40,
    hidden_dim=16, episodes=6, probe_steps=40, probe_hidden_dim=16, obs_noise_sigma=0.05,
)


@pytest.fixture(scope="module")
def tiny_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    report = run_study(StudyManifest(**TINY), out_dir=out)
    return out, report


def test_report_files(tiny_report):
    out, report = tiny_report
    assert json.loads((out / "report.json").read_text()) == json.loads(json.dumps(report))
    lines = (out / "cells.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 3 * 2 * 2
    assert len(report["per_config"]) == 3 * 2


def test_correlations_self_consistent(tiny_report):
    _, report = tiny_report
    corr = report["correlations"]
    assert corr["n"] == 6 and not corr["omitted"]
    rows = [c for c in report["cells"] if c["aug"] == "none"]
    rows.sort(key=lambda c: (c["lambda"], c["seed"]))
    success = [c["success"] for c in rows]
    if np.std(success) > 0:
        ref = pearson([c["combined"] for c in rows], success)
        assert corr["combined_vs_success"]["pearson_r"] == pytest.approx(ref.pearson_r, abs=1e-12)
        ref = pearson([c["probe_loss"] for c in rows], success)
        assert corr["probe_loss_vs_success"]["pearson_r"] == pytest.approx(ref.pearson_r, abs=1e-12)
    else:
        assert corr["combined_vs_success"] == {"omitted": True, "reason": "DegenerateVariance"}


def test_paired_tests_present(tiny_report):
    _, report = tiny_report
    tests = report["paired_tests"]
    assert set(tests) == {"te_vs_none"}
    assert tests["te_vs_none"]["pooled"]["n_pairs"] == 6
    assert set(tests["te_vs_none"]["per_lambda"]) == {"0.0", "0.5", "1.0"}


def test_shared_group_data(tiny_report):
    _, report = tiny_report
    by_group = {}
    for c in report["cells"]:
        by_group.setdefault((c["lambda"], c["seed"]), set()).add((c["combined"], c["probe_loss"]))
    assert all(len(v) == 1 for v in by_group.values())


def test_rerun_is_byte_identical(tiny_report, tmp_path):
    out, _ = tiny_report
    run_study(StudyManifest(**TINY), out_dir=tmp_path)
    for name in ("report.json", "cells.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_pool_matches_serial(tiny_report, tmp_path):
    out, _ = tiny_report
    run_study(StudyManifest(**TINY), out_dir=tmp_path, jobs=2)
    assert (tmp_path / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_single_cell_manifest(tmp_path):
    m = StudyManifest(lambdas=[1.0], seeds=[0], augmentations=["none"], demos=3, steps=5, hidden_dim=8,
                      episodes=2, probe_steps=5, probe_hidden_dim=8)
    report = run_study(m)
    assert len(report["cells"]) == 1
    assert report["correlations"]["omitted"] is True
    assert report["paired_tests"] == {}


def test_manifest_validation(tmp_path):
    with pytest.raises(MalformedManifest):
        StudyManifest.from_json({"lambdas": [2.0]})
    with pytest.raises(MalformedManifest):
        StudyManifest.from_json({"typo": 1})
    with pytest.raises(MalformedManifest):
        StudyManifest.from_json({"augmentations": ["bogus"]})
    assert StudyManifest.from_json({"seeds": 3}).seeds == [0, 1, 2]
    with pytest.raises(MissingFile):
        StudyManifest.load(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(MalformedManifest):
        StudyManifest.load(tmp_path / "bad.json")
