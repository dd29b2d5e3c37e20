"""Command-line entry points: training, distillation, evaluation, ablations.

Exit codes: 0 success, 2 configuration error, 3 checkpoint error. The
``PKF_SEED`` environment variable overrides the config seed; all relative
paths resolve against ``--workdir``.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import (
    PHASE1_VARIANTS,
    PHASE2_VARIANTS,
    RunConfig,
    config_hash,
    load_config,
)
from .errors import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3

METRIC_COLUMNS = ["terrain", "variant", "mxd_mean", "mxd_std", "mev_mean", "mev_std"]


def _resolve(workdir: str, path: str | None) -> str | None:
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(workdir, path)


def _load_cfg(args) -> RunConfig:
    cfg = load_config(_resolve(args.workdir, args.config))
    seed_env = os.environ.get("PKF_SEED")
    if seed_env is not None:
        try:
            cfg.seed = int(seed_env)
        except ValueError as e:
            raise ConfigurationError(f"PKF_SEED must be an integer, got {seed_env!r}") from e
    return cfg


def _terrain_label(cfg: RunConfig) -> str:
    return "+".join(cfg.terrain.kinds)


def _append_metrics(path, row: dict):
    from .learning import fmt6
    new = not os.path.exists(path)
    with open(path, "a") as f:
        if new:
            f.write(",".join(METRIC_COLUMNS) + "\n")
        cells = [str(row["terrain"]), str(row["variant"])]
        cells += [fmt6(row[c]) for c in METRIC_COLUMNS[2:]]
        f.write(",".join(cells) + "\n")


def cmd_train_phase1(args) -> int:
    from .learning import train_phase1
    cfg = _load_cfg(args)
    if cfg.variant not in PHASE1_VARIANTS:
        raise ConfigurationError(
            f"variant {cfg.variant!r} is not a phase-1 variant {PHASE1_VARIANTS}")
    out = train_phase1(cfg, args.workdir, iters=args.iters)
    print(f"checkpoint: {out['checkpoint']}")
    print(f"csv: {out['csv']}")
    return EXIT_OK


def cmd_distill_phase2(args) -> int:
    from .distill import train_phase2
    from .nets import load_checkpoint
    cfg = _load_cfg(args)
    variant = args.variant or cfg.variant
    if variant not in PHASE2_VARIANTS:
        raise ConfigurationError(
            f"variant {variant!r} is not a phase-2 variant {PHASE2_VARIANTS}")
    teacher_path = _resolve(args.workdir, args.teacher)
    try:
        _, header = load_checkpoint(teacher_path)
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    if header.get("phase") != 1:
        print(f"error: {teacher_path} is phase {header.get('phase')}, need phase 1",
              file=sys.stderr)
        return EXIT_CHECKPOINT
    if header.get("config_hash") != config_hash(cfg):
        print("warning: teacher config hash differs from the supplied config",
              file=sys.stderr)
    out = train_phase2(cfg, teacher_path, args.workdir, variant=variant,
                       iters=args.iters)
    print(f"checkpoint: {out['checkpoint']}")
    print(f"csv: {out['csv']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .distill import evaluate_student, load_student
    from .learning import build_course, evaluate
    from .nets import load_checkpoint
    from .policy import PolicyNets
    cfg = _load_cfg(args)
    ckpt = _resolve(args.workdir, args.checkpoint)
    try:
        _, header = load_checkpoint(ckpt)
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    if header.get("config_hash") != config_hash(cfg):
        print("warning: checkpoint config hash differs from the supplied config",
              file=sys.stderr)
    hf, course = build_course(cfg)
    dump_traj = _resolve(args.workdir, args.dump_traj)
    dump_depth = _resolve(args.workdir, args.dump_depth)
    phase = header.get("phase")
    variant = header.get("variant", cfg.variant)
    if phase == 1:
        nets, _ = PolicyNets.load(ckpt, tuple(cfg.learning.actor_hidden),
                                  tuple(cfg.learning.critic_hidden))
        row = evaluate(nets, hf, course, cfg, n_robots=args.robots,
                       duration=args.duration, seed=cfg.seed, variant=variant,
                       dump_traj=dump_traj, dump_depth=dump_depth)
    elif phase == 2:
        student, depth, _ = load_student(ckpt, cfg)
        row = evaluate_student(student, depth, cfg, hf, course, variant,
                               n_robots=args.robots, duration=args.duration,
                               seed=cfg.seed, dump_traj=dump_traj,
                               dump_depth=dump_depth)
    else:
        print(f"error: unknown checkpoint phase {phase}", file=sys.stderr)
        return EXIT_CHECKPOINT
    row.update(terrain=_terrain_label(cfg), variant=variant)
    out_csv = _resolve(args.workdir, args.out or "metrics.csv")
    _append_metrics(out_csv, row)
    print(",".join(METRIC_COLUMNS))
    from .learning import fmt6
    print(",".join([row["terrain"], row["variant"]]
                   + [fmt6(row[c]) for c in METRIC_COLUMNS[2:]]))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .learning import build_course, evaluate, train_phase1
    cfg = _load_cfg(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in PHASE1_VARIANTS:
            raise ConfigurationError(
                f"unknown ablation variant {v!r}; choose from {PHASE1_VARIANTS}")
    hf, course = build_course(cfg)
    out_csv = _resolve(args.workdir, args.out or "ablation.csv")
    if os.path.exists(out_csv):
        os.remove(out_csv)
    for v in variants:
        vdir = os.path.join(args.workdir, f"ablate_{v}")
        out = train_phase1(cfg, vdir, variant=v, iters=args.iters)
        row = evaluate(out["nets"], hf, course, cfg, n_robots=args.robots,
                       duration=args.duration, seed=cfg.seed, variant=v)
        row.update(terrain=_terrain_label(cfg), variant=v)
        _append_metrics(out_csv, row)
        print(f"{v}: mxd={row['mxd_mean']:.3f} mev={row['mev_mean']:.3f}")
    print(f"csv: {out_csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parkour",
                                description="Quadruped parkour training pipeline")
    p.add_argument("--workdir", default=".", help="root for all relative paths")
    sub = p.add_subparsers(dest="command", required=True)

    t1 = sub.add_parser("train-phase1", help="privileged RL training")
    t1.add_argument("--config", required=True)
    t1.add_argument("--iters", type=int, default=None)
    t1.set_defaults(fn=cmd_train_phase1)

    t2 = sub.add_parser("distill-phase2", help="depth-student distillation")
    t2.add_argument("--config", required=True)
    t2.add_argument("--teacher", required=True, help="phase-1 checkpoint")
    t2.add_argument("--variant", default=None, choices=list(PHASE2_VARIANTS))
    t2.add_argument("--iters", type=int, default=None)
    t2.set_defaults(fn=cmd_distill_phase2)

    ev = sub.add_parser("eval", help="batch evaluation of a checkpoint")
    ev.add_argument("--config", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--robots", type=int, default=256)
    ev.add_argument("--duration", type=float, default=30.0)
    ev.add_argument("--dump-traj", default=None)
    ev.add_argument("--dump-depth", default=None)
    ev.add_argument("--out", default=None, help="metrics CSV (default metrics.csv)")
    ev.set_defaults(fn=cmd_eval)

    ab = sub.add_parser("ablate", help="train and evaluate reward/sensing ablations")
    ab.add_argument("--config", required=True)
    ab.add_argument("--variants", default="ours,noinner,noclear,noisy")
    ab.add_argument("--iters", type=int, default=None)
    ab.add_argument("--robots", type=int, default=256)
    ab.add_argument("--duration", type=float, default=30.0)
    ab.add_argument("--out", default=None)
    ab.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.makedirs(args.workdir, exist_ok=True)
    try:
        return args.fn(args)
    except ConfigurationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
