import json

import numpy as np
import pytest

from entangle.cli import build_parser, main

SUBCOMMANDS = ("synth", "metrics", "pca", "encode", "probe", "bc-train", "rollout", "study", "stats")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["synth", "--variant", "pick_place", "--lambda", "0.75", "--demos", "5", "--seed", "7",
                 "--out", str(root), "--quiet"]) == 0
    return root


def test_encode_zero(capsys):
    assert main(["encode", "--n", "0"]) == 0
    values = capsys.readouterr().out.strip().split(",")
    assert values == ["0", "1"] * 32


def test_encode_golden(capsys):
    assert main(["encode", "--n", "25", "--bands", "2"]) == 0
    values = [float(v) for v in capsys.readouterr().out.strip().split(",")]
    np.testing.assert_allclose(values, [0.0, np.cos(25 * np.pi), 1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero(cmd, capsys):
    assert main([cmd, "--help"]) == 0


def test_usage_errors_exit_two(capsys):
    assert main([]) == 2
    assert main(["bogus"]) == 2
    assert main(["encode"]) == 2
    assert main(["synth"]) == 2


def test_synth_writes_extra(dataset):
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["extra"]["world"]["lambda"] == 0.75
    assert manifest["extra"]["world"]["seed"] == 7


def test_synth_is_deterministic(dataset, tmp_path):
    other = tmp_path / "again"
    main(["synth", "--variant", "pick_place", "--lambda", "0.75", "--demos", "5", "--seed", "7", "--out", str(other), "--quiet"])
    for path in sorted(dataset.rglob("*")):
        if path.is_file():
            assert (other / path.relative_to(dataset)).read_bytes() == path.read_bytes()


def test_metrics_happy_path(dataset, tmp_path, capsys):
    assert main(["metrics", str(dataset), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["normalization"] == "pairs"
    assert report["combined"] == pytest.approx(report["short_range"] * report["long_range"])
    assert main(["metrics", str(dataset), "--normalization", "paper", "--no-center", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["normalization"] == "paper"


def test_metrics_missing_dataset(tmp_path, capsys):
    assert main(["metrics", str(tmp_path / "missing")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert json.loads(err[0])["error"] == "MissingFile"


def test_pca_csv(dataset, tmp_path):
    assert main(["pca", str(dataset), "--task", "pick_place", "--demo", "2", "--out", str(tmp_path), "--quiet"]) == 0
    lines = (tmp_path / "pca.csv").read_text().splitlines()
    assert lines[0] == "frame,pc1,pc2"
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(len(lines) - 1))
    assert main(["pca", str(dataset), "--task", "nope", "--demo", "0", "--out", str(tmp_path)]) == 1


def test_probe_train_and_rollout(dataset, tmp_path, capsys):
    assert main(["probe", str(dataset), "--steps", "20", "--out", str(tmp_path), "--quiet"]) == 0
    assert json.loads((tmp_path / "probe.json").read_text())["task_progression_loss"] >= 0
    assert main(["bc-train", str(dataset), "--aug", "te", "--steps", "20", "--hidden", "16",
                 "--episodes", "4", "--out", str(tmp_path), "--quiet"]) == 0
    bc = json.loads((tmp_path / "bc.json").read_text())
    assert bc["augmentation"] == "te" and len(bc["loss_curve"]) == 1
    assert main(["rollout", str(tmp_path / "policy.ckpt"), "--episodes", "4", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "rollout.json").read_bytes()
    assert main(["rollout", str(tmp_path / "policy.ckpt"), "--episodes", "4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "rollout.json").read_bytes() == first
    assert main(["rollout", str(tmp_path / "missing.ckpt")]) == 1


def test_ct_checkpoint_rollout(dataset, tmp_path):
    assert main(["bc-train", str(dataset), "--policy", "ct", "--steps", "2", "--episodes", "0",
                 "--out", str(tmp_path), "--quiet"]) == 0
    assert main(["rollout", str(tmp_path / "policy.ckpt"), "--episodes", "2", "--out", str(tmp_path), "--quiet"]) == 0


def test_stats(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("x\n1\n1\n1\n2\n")
    (tmp_path / "b.csv").write_text("0,0,0,0\n")
    assert main(["stats", "--test", "ttest", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["statistic"] == pytest.approx(5.0)
    (tmp_path / "c.csv").write_text("1\n2\n3\n4\n5\n")
    assert main(["stats", "--test", "wilcoxon", "--a", str(tmp_path / "c.csv"), "--b", str(tmp_path / "b.csv")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "LengthMismatch"
    (tmp_path / "z.csv").write_text("0\n0\n0\n0\n0\n")
    assert main(["stats", "--test", "wilcoxon", "--a", str(tmp_path / "c.csv"), "--b", str(tmp_path / "z.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["p_two_sided"] == pytest.approx(0.0625)


def test_study_seed_override(tmp_path, capsys):
    manifest = {"lambdas": [0.0], "seeds": [0], "augmentations": ["none"], "demos": 3, "steps": 5,
                "hidden_dim": 8, "episodes": 2, "probe_steps": 5, "probe_hidden_dim": 8}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    assert main(["study", "--manifest", str(tmp_path / "m.json"), "--seed", "7", "--out", str(tmp_path / "a"), "--quiet"]) == 0
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["manifest"]["seed"] == 7
    assert main(["study", "--manifest", str(tmp_path / "nope.json")]) == 1


def test_global_flags_before_subcommand(tmp_path):
    args = build_parser().parse_args(["--seed", "3", "encode", "--n", "1"])
    assert args.seed == 3
    args = build_parser().parse_args(["encode", "--n", "1", "--seed", "5"])
    assert args.seed == 5


def test_synth_offset_flag(tmp_path):
    assert main(["synth", "--demos", "2", "--offset", "0.1", "--out", str(tmp_path), "--quiet"]) == 0
    world = json.loads((tmp_path / "manifest.json").read_text())["extra"]["world"]
    assert world["episode_offset_sigma"] == 0.1
