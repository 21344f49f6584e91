"""Command-line entry point: ``entangle <subcommand> ...``.

Artifacts go to files under ``--out``; a short human summary goes to stdout
(suppressed by ``--quiet``). Domain errors exit 1 with a one-line JSON object
on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import EntangleError, MissingFile, UnknownTask
from .metrics import entanglement_report, pca_project
from .neural import CausalTransformerSpec, MlpSpec, load_checkpoint, save_checkpoint
from .synthworld import VARIANTS, WorldConfig, evaluate_policy, generate_demos
from .tempenc import TemporalEncodingConfig, temporal_encode
from .trajstore import load_dataset, save_dataset

log = logging.getLogger("entangle")


def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args, default: str = ".") -> Path:
    out = Path(args.out if args.out is not None else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> str:
    if args.out is None:
        raise SystemExit("synth: --out is required")
    cfg = WorldConfig(
        variant=args.variant, feature_dim=args.feature_dim, lam=args.lam,
        obs_noise_sigma=args.noise, episode_offset_sigma=args.offset, max_steps=args.max_steps, seed=args.seed,
    )
    ds = generate_demos(cfg, args.demos)
    save_dataset(ds, args.out)
    return f"wrote {args.demos} {args.variant} demos ({ds.stats.total_frames} frames) to {args.out}"


def cmd_metrics(args) -> str:
    ds = load_dataset(args.dataset)
    rep = entanglement_report(ds, normalization=args.normalization, centered=not args.no_center, stride=args.stride)
    _write_json(_out_dir(args) / "report.json", rep.to_json())
    return f"short={rep.short_range:.5f} long={rep.long_range:.5f} combined={rep.combined:.5f}"


def cmd_pca(args) -> str:
    ds = load_dataset(args.dataset)
    if args.task not in ds.demos:
        raise UnknownTask(f"unknown task {args.task!r}")
    demos = {t.demo_id: t for t in ds.demos[args.task]}
    if args.demo not in demos:
        raise UnknownTask(f"task {args.task!r} has no demo {args.demo}")
    proj = pca_project(demos[args.demo], components=2)
    lines = ["frame,pc1,pc2"] + [f"{i},{_num(a)},{_num(b)}" for i, (a, b) in enumerate(proj.scores)]
    (_out_dir(args) / "pca.csv").write_text("\n".join(lines) + "\n")
    return f"variances={_num(proj.variances[0])},{_num(proj.variances[1])} rank_deficient={proj.rank_deficient}"


def cmd_encode(args) -> str:
    cfg = TemporalEncodingConfig(bands=args.bands, scale=args.scale, schedule=args.schedule)
    line = ",".join(_num(v) for v in temporal_encode(args.n, cfg))
    print(line)
    return ""


def cmd_probe(args) -> str:
    from .analysis.probe import train_progression_probe

    ds = load_dataset(args.dataset)
    spec = MlpSpec(ds.feature_dim, 1, hidden_dim=args.hidden, n_hidden_layers=2, output_activation="sigmoid")
    res = train_progression_probe(ds, spec, holdout_fraction=args.holdout, steps=args.steps, seed=args.seed, lr=args.lr)
    _write_json(_out_dir(args) / "probe.json", res.to_json())
    return f"task_progression_loss={res.task_progression_loss:.6f}"


def cmd_bc_train(args) -> str:
    from .analysis.bc import world_configs, train_bc_policy

    ds = load_dataset(args.dataset)
    res = train_bc_policy(
        ds, args.aug, policy=args.policy, steps=args.steps, batch=args.batch, lr=args.lr,
        seed=args.seed, hidden_dim=args.hidden, episodes=args.episodes,
    )
    out = _out_dir(args)
    header = {
        "policy": res.policy_kind,
        "spec": res.spec.to_dict(),
        "augmentation": res.augmentation.to_json(),
        "worlds": {t: c.to_json() for t, c in world_configs(ds).items()},
    }
    save_checkpoint(out / "policy.ckpt", res.params, header)
    _write_json(out / "bc.json", {
        "policy": res.policy_kind, "augmentation": res.augmentation.kind, "loss_curve": res.loss_curve,
        "success_rate": res.success_rate, "per_task_success": res.per_task_success,
    })
    rate = "n/a" if res.success_rate is None else f"{res.success_rate:.3f}"
    return f"final_loss={res.loss_curve[-1] if res.loss_curve else float('nan'):.6f} success={rate}"


def cmd_rollout(args) -> str:
    from .analysis.bc import Augmentation, BcResult, check_input_dim
    from .synthworld import ACTION_DIM, PROPRIO_DIM

    params, header = load_checkpoint(args.checkpoint)
    spec_cls = CausalTransformerSpec if header["policy"] == "ct" else MlpSpec
    spec = spec_cls(**header["spec"])
    aug = Augmentation.from_json(header["augmentation"])
    worlds = {t: WorldConfig.from_json(c) for t, c in header.get("worlds", {}).items()}
    if args.variant is not None:
        base = worlds.get(args.variant, WorldConfig(variant=args.variant))
        lam = base.lam if args.lam is None else args.lam
        worlds = {args.variant: dataclasses.replace(base, lam=lam)}
    if not worlds:
        raise MissingFile("checkpoint records no world config; pass --variant")
    result = BcResult(header["policy"], aug, params, spec, [])
    per_task = {}
    for task, cfg in worlds.items():
        check_input_dim(spec, aug, cfg.feature_dim, PROPRIO_DIM)
        if (spec.output_dim if header["policy"] == "mlp" else spec.action_dim) != ACTION_DIM:
            raise EntangleError("checkpoint action dim does not match the world")
        per_task[task] = evaluate_policy(result.make_policy(args.receding_horizon), cfg, args.episodes, seed=args.seed)
    rate = float(np.mean(list(per_task.values())))
    _write_json(_out_dir(args) / "rollout.json", {"episodes": args.episodes, "success_rate": rate, "per_task_success": per_task})
    return f"success={rate:.3f} " + " ".join(f"{t}={r:.3f}" for t, r in per_task.items())


def cmd_study(args) -> str:
    from .analysis.study import StudyManifest, run_study

    manifest = StudyManifest.load(args.manifest)
    if args.seed_given:
        manifest.seed = args.seed
    out = args.out if args.out is not None else (manifest.out or ".")
    report = run_study(manifest, out_dir=out, jobs=args.jobs)
    corr = report["correlations"]
    summary = f"{len(report['cells'])} cells written to {out}"
    if not corr.get("omitted") and corr.get("combined_vs_success") and "pearson_r" in corr["combined_vs_success"]:
        summary += f"; r(combined, success)={corr['combined_vs_success']['pearson_r']:.3f}"
    return summary


def _read_column(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise MissingFile(f"no such file: {path}") from exc
    values = [v for line in text.splitlines() for v in line.replace(",", " ").split()]
    try:
        return np.array([float(v) for v in values])
    except ValueError:
        # tolerate a single header token
        return np.array([float(v) for v in values[1:]])


def cmd_stats(args) -> str:
    from .analysis.stats import paired_t_test, wilcoxon_signed_rank

    a, b = _read_column(args.a), _read_column(args.b)
    res = (wilcoxon_signed_rank if args.test == "wilcoxon" else paired_t_test)(a, b)
    if args.out is not None:
        _write_json(_out_dir(args) / "stats.json", res.to_json())
    return json.dumps(res.to_json(), sort_keys=True)


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(v):
        return argparse.SUPPRESS if suppress else v

    parser.add_argument("--seed", type=int, default=default(0), help="random seed (default 0)")
    parser.add_argument("--out", default=default(None), help="output directory")
    parser.add_argument("--quiet", action="store_true", default=default(False), help="no stdout summary")
    parser.add_argument("--jobs", type=int, default=default(1), help="worker processes for study")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entangle", description="Temporal entanglement toolkit")
    _globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic expert demos")
    p.add_argument("--variant", choices=VARIANTS, default="pick_place")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--demos", type=int, default=25)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--offset", type=float, default=0.0, help="per-episode feature offset scale")
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--max-steps", type=int, default=100)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", parents=[common], help="entanglement report for a dataset")
    p.add_argument("dataset")
    p.add_argument("--normalization", choices=("pairs", "paper"), default="pairs")
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("pca", parents=[common], help="2-D PCA projection of one demo")
    p.add_argument("dataset")
    p.add_argument("--task", required=True)
    p.add_argument("--demo", type=int, required=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("encode", parents=[common], help="print the timestep encoding as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bands", type=int, default=32)
    p.add_argument("--scale", type=float, default=100.0)
    p.add_argument("--schedule", choices=("decay", "classic"), default="decay")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("probe", parents=[common], help="train a task-progression probe")
    p.add_argument("dataset")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=256)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("bc-train", parents=[common], help="behaviour-clone a policy")
    p.add_argument("dataset")
    p.add_argument("--aug", choices=("none", "flare", "te", "flare_te"), default="none")
    p.add_argument("--policy", choices=("mlp", "ct"), default="mlp")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--episodes", type=int, default=50, help="evaluation episodes per task (0 skips)")
    p.set_defaults(func=cmd_bc_train)

    p = sub.add_parser("rollout", parents=[common], help="evaluate a saved policy")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--receding-horizon", action="store_true")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("study", parents=[common], help="run a study manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("stats", parents=[common], help="paired test on two CSV columns")
    p.add_argument("--test", choices=("wilcoxon", "ttest"), required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed_given = "--seed" in argv or any(a.startswith("--seed=") for a in argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        summary = args.func(args)
    except EntangleError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(json.dumps({"error": "InvalidArgument", "message": str(exc)}), file=sys.stderr)
        return 1
    except SystemExit as exc:
        print(exc.code, file=sys.stderr)
        return 2
    if summary and not args.quiet:
        print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
