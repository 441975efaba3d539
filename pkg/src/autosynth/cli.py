"""Command-line entry point.

Subcommands tie the pipeline together: ``search`` runs the evolutionary
dataset search against a target mesh, ``gen`` expands a policy JSON into a
dataset on disk, ``eval`` scores one policy, ``baseline`` runs the
no-guidance baselines, and ``report`` turns a history CSV into plot-ready
CSV plus figures.

Configuration comes from an optional JSON file with flag overrides (flags
win).  ``--seed`` is the single entropy root; given the same config and
seeds every command reproduces its outputs byte for byte.  Exit codes:
0 ok, 2 usage/config error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .datasetgen import (
    build_target_dataset,
    demo_target_mesh,
    export_dataset,
    generate_dataset,
)
from .errors import NonFinite
from .evolution import (
    AutosynthEvaluator,
    EvaluatorConfig,
    SearchConfig,
    load_checkpoint,
    run_search,
    save_checkpoint,
    write_history_csv,
    read_history_csv,
)
from .meshio import load_mesh
from .policy import Policy, full_range_policy, random_policy
from .report import build_report, render_figures, write_report_csv
from .rng import as_generator, derive_seed
from .surrogate import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; mirrors the JSON config file."""

    seed: int = 0
    threads: int | None = None
    out_dir: str = "autosynth-out"
    target_mesh: str = "demo"  # "demo" or a path to an OBJ/PLY file
    target_aug: int = 100
    points_per_cloud: int = 256
    objects_per_dataset: int = 400
    population: int = 32
    trials: int = 1_000
    baseline_samples: int = 20
    surrogate: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.target_aug < 1:
            raise ValueError("target_aug must be >= 1")
        if self.points_per_cloud < 8:
            raise ValueError("points_per_cloud must be >= 8")
        if self.objects_per_dataset < 1:
            raise ValueError("objects_per_dataset must be >= 1")
        if self.target_mesh != "demo" and not Path(self.target_mesh).exists():
            raise ValueError(f"target mesh not found: {self.target_mesh}")


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config; errors carry the file position."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}")
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    top_fields = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in top_fields:
            raise ValueError(f"{path}: unknown config key {key!r}")
    sur = data.pop("surrogate", {})
    sur_fields = {f.name for f in fields(TrainConfig)}
    for key in sur:
        if key not in sur_fields:
            raise ValueError(f"{path}: unknown surrogate config key {key!r}")
    for tuple_key in ("encoder_widths", "decoder_widths"):
        if tuple_key in sur:
            sur[tuple_key] = tuple(sur[tuple_key])
    try:
        return RunConfig(surrogate=TrainConfig(**sur), **data)
    except (TypeError, ValueError) as err:
        raise ValueError(f"{path}: {err}")


def _resolve_threads(args, cfg: RunConfig) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get("AUTOSYNTH_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"AUTOSYNTH_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _apply_overrides(args, cfg: RunConfig) -> RunConfig:
    updates = {}
    for flag, key in (
        ("seed", "seed"),
        ("out", "out_dir"),
        ("target", "target_mesh"),
        ("population", "population"),
        ("trials", "trials"),
        ("objects", "objects_per_dataset"),
        ("points", "points_per_cloud"),
        ("target_aug", "target_aug"),
        ("baseline_samples", "baseline_samples"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            updates[key] = value
    sur_updates = {}
    if getattr(args, "iterations", None) is not None:
        sur_updates["iterations"] = args.iterations
    if sur_updates:
        updates["surrogate"] = replace(cfg.surrogate, **sur_updates)
    return replace(cfg, **updates) if updates else cfg


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return _apply_overrides(args, cfg)


def _load_target_mesh(cfg: RunConfig):
    if cfg.target_mesh == "demo":
        return demo_target_mesh()
    return load_mesh(cfg.target_mesh)


def _make_evaluator(cfg: RunConfig, threads: int) -> AutosynthEvaluator:
    target = build_target_dataset(
        _load_target_mesh(cfg),
        cfg.target_aug,
        cfg.points_per_cloud,
        seed=derive_seed(cfg.seed, "target"),
    )
    eval_cfg = EvaluatorConfig(
        objects_per_dataset=cfg.objects_per_dataset,
        points_per_cloud=cfg.points_per_cloud,
        train=cfg.surrogate,
        seed=derive_seed(cfg.seed, "evaluator"),
        threads=threads,
    )
    return AutosynthEvaluator(eval_cfg, target)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_search(args) -> int:
    cfg = _config_from_args(args)
    threads = _resolve_threads(args, cfg)
    out = _out_dir(cfg)
    evaluator = _make_evaluator(cfg, threads)
    search_cfg = SearchConfig(
        population=cfg.population, trials=cfg.trials, seed=cfg.seed
    )
    state = load_checkpoint(args.resume) if args.resume else None
    started = time.perf_counter()
    state = run_search(
        search_cfg,
        evaluator,
        state=state,
        checkpoint_path=args.checkpoint,
        checkpoint_every=args.checkpoint_every,
    )
    wall = time.perf_counter() - started
    if args.checkpoint:
        save_checkpoint(state, args.checkpoint)

    state.best.policy.save(out / "best_policy.json")
    write_history_csv(state.history, out / "history.csv")
    summary = {
        "best_labels": list(state.best.policy.labels),
        "best_score": state.best.score,
        "evaluations": evaluator.evaluations,
        "population": cfg.population,
        "seed": cfg.seed,
        "target_mesh": cfg.target_mesh,
        "trials": cfg.trials,
        "wall_time_s": wall,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"best score {state.best.score:.6g} after {cfg.trials} trials")
    print(f"artifacts in {out}")
    return 0


def cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    threads = _resolve_threads(args, cfg)
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    policy = Policy.load(args.policy)
    dataset = generate_dataset(
        policy,
        args.n,
        cfg.points_per_cloud,
        seed=cfg.seed,
        threads=threads,
    )
    manifest = export_dataset(
        dataset, _out_dir(cfg), mesh_format=args.mesh_format,
        cloud_format=args.cloud_format,
    )
    print(manifest)
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    threads = _resolve_threads(args, cfg)
    policy = Policy.load(args.policy)
    evaluator = _make_evaluator(cfg, threads)
    score = evaluator(policy)
    record = {
        "labels": list(policy.labels),
        "policy_file": str(args.policy),
        "score": score,
        "seed": cfg.seed,
        "target_mesh": cfg.target_mesh,
    }
    out = _out_dir(cfg)
    (out / "eval.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"{score:.6g}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _config_from_args(args)
    threads = _resolve_threads(args, cfg)
    evaluator = _make_evaluator(cfg, threads)
    out = _out_dir(cfg)
    if args.mode == "full-range":
        score = evaluator(full_range_policy())
        record = {"mode": "full-range", "score": score, "seed": cfg.seed}
        print(f"{score:.6g}")
    else:
        scores = []
        for i in range(cfg.baseline_samples):
            rng = as_generator(derive_seed(cfg.seed, "baseline", i))
            scores.append(evaluator(random_policy(rng)))
        ordered = sorted(scores)
        n = len(ordered)
        median = (
            ordered[n // 2]
            if n % 2
            else 0.5 * (ordered[n // 2 - 1] + ordered[n // 2])
        )
        record = {
            "median": median,
            "min": ordered[0],
            "mode": "random",
            "samples": cfg.baseline_samples,
            "scores": scores,
            "seed": cfg.seed,
        }
        print(f"min {ordered[0]:.6g} median {median:.6g} over {n} random policies")
    (out / "baseline.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def cmd_report(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    rows = read_history_csv(args.history)
    report = build_report(rows)
    write_report_csv(report, out / "report.csv")
    figures = render_figures(report, out)
    print(out / "report.csv")
    for fig in figures:
        print(fig)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autosynth",
        description=(
            "Search for the shape-generation policy whose synthetic dataset "
            "best trains a point-cloud reconstruction model on a target shape."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--seed", type=int, help="entropy root (default 0)")
    common.add_argument(
        "--threads",
        type=int,
        help="worker threads; default AUTOSYNTH_THREADS or the hardware count",
    )
    common.add_argument("--out", help="output directory (default autosynth-out)")

    p = sub.add_parser(
        "search",
        parents=[common],
        help="run the evolutionary dataset search",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--target", help="target mesh OBJ/PLY, or 'demo' (default demo)")
    p.add_argument("--target-aug", dest="target_aug", type=int,
                   help="rotated target samples (default 100)")
    p.add_argument("--population", type=int, help="pool size (default 32)")
    p.add_argument("--trials", type=int, help="evolution steps (default 1000)")
    p.add_argument("--objects", type=int,
                   help="objects per synthetic dataset (default 400)")
    p.add_argument("--points", type=int, help="points per cloud (default 256)")
    p.add_argument("--iterations", type=int,
                   help="surrogate training iterations (default 2000)")
    p.add_argument("--checkpoint", help="write search state to this file")
    p.add_argument("--checkpoint-every", type=int, default=25,
                   help="trials between checkpoints")
    p.add_argument("--resume", help="resume from a checkpoint file")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser(
        "gen",
        parents=[common],
        help="expand a policy JSON into a dataset on disk",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--n", type=int, required=True, help="number of objects")
    p.add_argument("--points", type=int, help="points per cloud (default 256)")
    p.add_argument("--mesh-format", choices=("obj", "ply"), default="obj",
                   help="mesh file format")
    p.add_argument("--cloud-format", choices=("ply", "xyz"), default="ply",
                   help="cloud file format")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser(
        "eval",
        parents=[common],
        help="score one policy against a target",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--target", help="target mesh OBJ/PLY, or 'demo' (default demo)")
    p.add_argument("--target-aug", dest="target_aug", type=int,
                   help="rotated target samples (default 100)")
    p.add_argument("--objects", type=int,
                   help="objects per synthetic dataset (default 400)")
    p.add_argument("--points", type=int, help="points per cloud (default 256)")
    p.add_argument("--iterations", type=int,
                   help="surrogate training iterations (default 2000)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "baseline",
        parents=[common],
        help="score the no-guidance baselines",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--mode", choices=("random", "full-range"), required=True,
                   help="random policies or the all-maximum policy")
    p.add_argument("--baseline-samples", dest="baseline_samples", type=int,
                   help="random policies to score (default 20)")
    p.add_argument("--target", help="target mesh OBJ/PLY, or 'demo' (default demo)")
    p.add_argument("--target-aug", dest="target_aug", type=int,
                   help="rotated target samples (default 100)")
    p.add_argument("--objects", type=int,
                   help="objects per synthetic dataset (default 400)")
    p.add_argument("--points", type=int, help="points per cloud (default 256)")
    p.add_argument("--iterations", type=int,
                   help="surrogate training iterations (default 2000)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser(
        "report",
        parents=[common],
        help="summarize a history CSV into plots and a report CSV",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--history", required=True, help="history CSV from search")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFinite as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
