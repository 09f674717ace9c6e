"""Command-line front end.

Subcommands: pretrain, finetune, eval, theory, sweep-alpha. Every run
directory receives a manifest before computation starts; outputs are CSV
tables, plain graymaps, binary policy checkpoints, and PNG figures. Exit
codes: 0 success, 2 usage, 3 configuration error, 4 missing file,
1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    load_finetune_config,
    load_tasks_file,
    load_trainer_config,
    preset_path,
)
from .errors import ConfigError, MissingFileError, RiskmaxentError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 3
EXIT_MISSING = 4


def default_workers() -> int:
    env = os.environ.get("RISKMAXENT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"RISKMAXENT_WORKERS must be an integer, got {env!r}")
    return max(1, os.cpu_count() or 1)


def _parse_float_list(raw: str):
    return [float(v) for v in raw.split(",") if v.strip()]


def _parse_int_list(raw: str):
    return [int(v) for v in raw.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskmaxent",
        description="Percentile-sensitive maximum-entropy pre-training and fine-tuning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("pretrain", help="run unsupervised exploration pre-training")
    pre.add_argument("--config", required=True, help="trainer config file (.cfg)")
    pre.add_argument("--out", required=True, help="run output directory")
    pre.add_argument("--epochs", type=int, default=None, help="override epoch count")
    pre.add_argument("--alpha", type=float, default=None, help="override percentile level")
    pre.add_argument("--seed", type=int, default=None, help="override master seed")
    pre.add_argument("--reuse", action="store_true", help="reuse a completed matching run")
    pre.add_argument("--workers", type=int, default=None, help=argparse.SUPPRESS)
    pre.add_argument("--quiet", action="store_true")

    sweep = sub.add_parser("sweep-alpha", help="pretrain over a grid of percentile levels")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--alphas", default="0.1,0.2,0.5,1.0", help="comma-separated levels")
    sweep.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    sweep.add_argument("--epochs", type=int, default=None)
    sweep.add_argument("--no-reuse", action="store_true", help="recompute finished runs")
    sweep.add_argument("--workers", type=int, default=None)

    ev = sub.add_parser("eval", help="evaluate a checkpoint's exploration entropy")
    ev.add_argument("--config", required=True, help="trainer config file (.cfg)")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--trajectories", type=int, default=None)

    fin = sub.add_parser("finetune", help="fine-tune on sparse goal tasks")
    fin.add_argument("--config", required=True, help="fine-tune config file (.cfg)")
    fin.add_argument("--init", required=True, help="policy checkpoint path or 'random'")
    fin.add_argument("--tasks", required=True, help="tasks file (.cfg)")
    fin.add_argument("--out", required=True)
    fin.add_argument("--iterations", type=int, default=None)
    fin.add_argument("--seed", type=int, default=None)
    fin.add_argument("--no-reuse", action="store_true")
    fin.add_argument("--workers", type=int, default=None)

    theory = sub.add_parser("theory", help="verify diameter/entropy-gap bounds numerically")
    theory.add_argument("--instances", type=int, default=100)
    theory.add_argument("--seed", type=int, default=0)
    theory.add_argument("--policies", type=int, default=10)
    theory.add_argument("--out", required=True, help="output CSV path")

    return parser


def cmd_pretrain(args) -> int:
    from .experiments import run_pretrain

    overrides = {"epochs": args.epochs, "alpha": args.alpha, "seed": args.seed}
    cfg, env_class, _ = load_trainer_config(args.config, overrides)
    log = None
    if not args.quiet:
        def log(report):
            print(
                f"epoch {report.epoch}: mean={report.mean_entropy:.4f} "
                f"tail={report.cvar_entropy:.4f} steps={report.offpolicy_steps} "
                f"kl={report.kl_stop:.3f}",
                flush=True,
            )
    result = run_pretrain(cfg, env_class, args.out, reuse=args.reuse, log=log)
    print(f"final mean entropy {result.final_mean_entropy:.4f} -> {result.out_dir}")
    return EXIT_OK


def cmd_sweep_alpha(args) -> int:
    from .experiments import sweep_alpha

    cfg, env_class, _ = load_trainer_config(args.config, {"epochs": args.epochs})
    workers = args.workers if args.workers is not None else default_workers()
    rows = sweep_alpha(
        cfg,
        env_class,
        _parse_float_list(args.alphas),
        _parse_int_list(args.seeds),
        args.out,
        reuse=not args.no_reuse,
        workers=workers,
        log=lambda msg: print(msg, flush=True),
    )
    print(f"{len(rows)} sweep rows -> {Path(args.out) / 'sweep.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiments import EVAL_CSV_COLUMNS, mark_complete, write_manifest
    from .policy import GaussianPolicy
    from .pretrain import evaluate_entropy
    from .reporting import emit_heatmap, write_csv

    cfg, env_class, resolved = load_trainer_config(args.config)
    ck_path = Path(args.checkpoint)
    if not ck_path.exists():
        raise MissingFileError(f"checkpoint not found: {ck_path}")
    policy, params = GaussianPolicy.load_checkpoint(ck_path)
    out_dir = Path(args.out)
    resolved = dict(resolved)
    resolved["checkpoint"] = str(ck_path)
    write_manifest(out_dir, "eval", resolved, cfg.seed, ["eval.csv"])
    rows = []
    for idx, config in enumerate(env_class.configs):
        ev = evaluate_entropy(
            policy, params, env_class, idx, cfg, n_trajectories=args.trajectories
        )
        emit_heatmap(ev.states, out_dir / f"heatmap_{config.name}.pgm", side=config.side)
        rows.append(
            [config.name, ev.mean_entropy, ev.cvar_entropy, ev.var_entropy,
             args.trajectories or cfg.trajectories]
        )
        print(f"{config.name}: mean={ev.mean_entropy:.4f} tail={ev.cvar_entropy:.4f}")
    write_csv(out_dir / "eval.csv", EVAL_CSV_COLUMNS, rows)
    mark_complete(out_dir, {"configs": len(rows)})
    return EXIT_OK


def cmd_finetune(args) -> int:
    from .experiments import run_finetune_suite

    overrides = {"iterations": args.iterations, "seed": args.seed}
    cfg, env_class, _ = load_finetune_config(args.config, overrides)
    tasks = load_tasks_file(args.tasks)
    init_path = None
    if args.init != "random":
        init_path = Path(args.init)
        if not init_path.exists():
            raise MissingFileError(f"checkpoint not found: {init_path}")
    workers = args.workers if args.workers is not None else default_workers()
    results = run_finetune_suite(
        cfg, env_class, tasks, init_path, args.out,
        reuse=not args.no_reuse, workers=workers,
    )
    mean_final = float(np.mean([r.final_return for r in results]))
    print(f"{len(results)} tasks, mean final return {mean_final:.2f} -> {args.out}")
    return EXIT_OK


def cmd_theory(args) -> int:
    from .reporting import write_csv
    from .theory import verify_bounds

    reports = verify_bounds(args.instances, args.seed, policies_per_instance=args.policies)
    rows = [
        [r.instance, r.policy, r.theorem, r.exact, r.bound,
         int(r.satisfied), int(r.excluded), r.note]
        for r in reports
    ]
    write_csv(
        args.out,
        ["instance", "policy", "theorem", "exact", "bound", "satisfied", "excluded", "note"],
        rows,
    )
    checked = [r for r in reports if not r.excluded]
    violations = [r for r in checked if not r.satisfied]
    excluded = len(reports) - len(checked)
    print(
        f"{len(checked)} bounds checked, {len(violations)} violations, "
        f"{excluded} excluded -> {args.out}"
    )
    return EXIT_OK if not violations else EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "pretrain": cmd_pretrain,
        "sweep-alpha": cmd_sweep_alpha,
        "eval": cmd_eval,
        "finetune": cmd_finetune,
        "theory": cmd_theory,
    }
    try:
        return handlers[args.command](args)
    except MissingFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RiskmaxentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
