"""Run-directory management for experiments: manifests, reuse, and sweeps.

Every run writes a ``manifest.json`` before any computation starts (command,
config hash, seed, code version, start time, output paths) and a
``run_complete.json`` marker afterwards. A finished directory whose manifest
hash matches the requested configuration can be reused instead of
recomputed; together with fully seeded determinism this makes suites of
long experiments resumable and bit-reproducible.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import config_hash
from .environments import EnvironmentClass, GoalTask
from .finetune import FinetuneConfig, evaluate_return, finetune
from .policy import GaussianPolicy
from .pretrain import EpochReport, TrainerConfig, evaluate_entropy, pretrain
from .reporting import (
    EpochCsvWriter,
    emit_heatmap,
    plot_alpha_sweep,
    plot_entropy_curves,
    plot_return_curves,
    write_csv,
)

EVAL_CSV_COLUMNS = ["config", "mean_entropy", "cvar_entropy", "var_entropy", "n_trajectories"]
SWEEP_CSV_COLUMNS = ["alpha", "seed", "config", "mean_entropy", "cvar_entropy", "var_entropy"]
RETURNS_CSV_COLUMNS = ["iteration", "avg_return", "sampled_kl", "surrogate_improvement", "accepted"]
FINETUNE_SUMMARY_COLUMNS = ["task", "init", "final_return", "auc"]
EVAL_RETURN_EPISODES = 25


def write_manifest(out_dir: Path, command: str, resolved: Dict[str, object], seed: int,
                   outputs: Sequence[str]) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(resolved)
    manifest = {
        "command": command,
        "config_hash": digest,
        "config": resolved,
        "seed": seed,
        "version": __version__,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": list(outputs),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


def mark_complete(out_dir: Path, summary: Dict[str, object]) -> None:
    payload = dict(summary)
    payload["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(out_dir / "run_complete.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def reusable(out_dir: Path, command: str, resolved: Dict[str, object]) -> bool:
    """True when the directory holds a finished run of this configuration."""
    manifest_path = out_dir / "manifest.json"
    complete_path = out_dir / "run_complete.json"
    if not (manifest_path.exists() and complete_path.exists()):
        return False
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    return manifest.get("command") == command and manifest.get("config_hash") == config_hash(
        resolved
    )


@dataclass(frozen=True)
class PretrainRun:
    out_dir: Path
    checkpoint: Path
    eval_rows: List[Dict[str, float]]
    final_mean_entropy: float
    best_mean_entropy: float
    first_mean_entropy: float


def _resolved_options(cfg: TrainerConfig, env_class: EnvironmentClass) -> Dict[str, object]:
    resolved = {
        "epochs": cfg.epochs,
        "horizon": cfg.horizon,
        "trajectories": cfg.trajectories,
        "batch_size": cfg.batch_size,
        "alpha": cfg.alpha,
        "learning_rate": cfg.learning_rate,
        "kl_threshold": cfg.kl_threshold,
        "k_neighbors": cfg.k_neighbors,
        "max_offpolicy_iters": cfg.max_offpolicy_iters,
        "baseline_enabled": cfg.baseline_enabled,
        "seed": cfg.seed,
        "hidden": list(cfg.hidden),
        "compute_dtype": cfg.compute_dtype,
        "class_name": env_class.name,
        "class_members": [c.name for c in env_class.configs],
        "sampling": [float(p) for p in env_class.sampling],
    }
    return resolved


def _load_eval_rows(out_dir: Path) -> List[Dict[str, float]]:
    rows = []
    with open(out_dir / "eval.csv", "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            row = dict(zip(header, parts))
            for key in ("mean_entropy", "cvar_entropy", "var_entropy"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def run_pretrain(
    cfg: TrainerConfig,
    env_class: EnvironmentClass,
    out_dir,
    reuse: bool = False,
    eval_trajectories: Optional[int] = None,
    log=None,
) -> PretrainRun:
    """Pre-train, evaluate per configuration, and persist all artifacts.

    Artifacts: epochs.csv (one row per epoch, streamed), checkpoint_final.bin,
    checkpoint_best.bin (by mean entropy), eval.csv, one occupancy graymap and
    the entropy-curve figure. With ``reuse`` a completed matching run is
    loaded instead of recomputed.
    """
    out_dir = Path(out_dir)
    resolved = _resolved_options(cfg, env_class)
    checkpoint = out_dir / "checkpoint_final.bin"

    if reuse and reusable(out_dir, "pretrain", resolved):
        with open(out_dir / "run_complete.json", "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        return PretrainRun(
            out_dir=out_dir,
            checkpoint=checkpoint,
            eval_rows=_load_eval_rows(out_dir),
            final_mean_entropy=float(summary["final_mean_entropy"]),
            best_mean_entropy=float(summary["best_mean_entropy"]),
            first_mean_entropy=float(summary["first_mean_entropy"]),
        )

    config_names = [c.name for c in env_class.configs]
    outputs = ["epochs.csv", "checkpoint_final.bin", "checkpoint_best.bin", "eval.csv",
               "entropy_curves.png"] + [f"heatmap_{n}.pgm" for n in config_names]
    write_manifest(out_dir, "pretrain", resolved, cfg.seed, outputs)

    policy = GaussianPolicy(2, 2, hidden=cfg.hidden)
    best = {"entropy": -np.inf, "params": None}
    reports: List[EpochReport] = []

    with EpochCsvWriter(out_dir / "epochs.csv", config_names) as writer:

        def on_epoch(report: EpochReport, params: np.ndarray) -> None:
            writer.write(report)
            reports.append(report)
            if report.mean_entropy > best["entropy"]:
                best["entropy"] = report.mean_entropy
                best["params"] = params.copy()
            if log is not None:
                log(report)

        policy, params, _ = pretrain(cfg, env_class, policy=policy, on_epoch=on_epoch)

    policy.save_checkpoint(params, checkpoint)
    policy.save_checkpoint(
        best["params"] if best["params"] is not None else params, out_dir / "checkpoint_best.bin"
    )

    eval_rows = []
    csv_rows = []
    n_eval = eval_trajectories if eval_trajectories is not None else cfg.trajectories
    for idx, config in enumerate(env_class.configs):
        ev = evaluate_entropy(policy, params, env_class, idx, cfg, n_trajectories=n_eval)
        emit_heatmap(ev.states, out_dir / f"heatmap_{config.name}.pgm", side=config.side)
        eval_rows.append(
            {
                "config": config.name,
                "mean_entropy": ev.mean_entropy,
                "cvar_entropy": ev.cvar_entropy,
                "var_entropy": ev.var_entropy,
            }
        )
        csv_rows.append(
            [config.name, ev.mean_entropy, ev.cvar_entropy, ev.var_entropy, n_eval]
        )
    write_csv(out_dir / "eval.csv", EVAL_CSV_COLUMNS, csv_rows)
    if reports:
        plot_entropy_curves(reports, config_names, out_dir / "entropy_curves.png")

    first = reports[0].mean_entropy if reports else float("nan")
    final = reports[-1].mean_entropy if reports else float("nan")
    summary = {
        "first_mean_entropy": first,
        "final_mean_entropy": final,
        "best_mean_entropy": best["entropy"] if reports else float("nan"),
        "epochs": len(reports),
    }
    mark_complete(out_dir, summary)
    return PretrainRun(
        out_dir=out_dir,
        checkpoint=checkpoint,
        eval_rows=eval_rows,
        final_mean_entropy=final,
        best_mean_entropy=float(summary["best_mean_entropy"]),
        first_mean_entropy=first,
    )


def _sweep_worker(args) -> Tuple[float, int, str]:
    cfg, env_class, run_dir, reuse = args
    run_pretrain(cfg, env_class, run_dir, reuse=reuse)
    return (cfg.alpha, cfg.seed, str(run_dir))


def sweep_alpha(
    base_cfg: TrainerConfig,
    env_class: EnvironmentClass,
    alphas: Sequence[float],
    seeds: Sequence[int],
    out_root,
    reuse: bool = True,
    workers: int = 1,
    log=None,
) -> List[Dict[str, object]]:
    """Pre-train over an (alpha, seed) grid and tabulate per-config entropy.

    Returns the sweep table rows; also writes sweep.csv and a grouped-bar
    figure of seed-averaged per-config entropy under ``out_root``.
    """
    out_root = Path(out_root)
    jobs = []
    for alpha in alphas:
        for seed in seeds:
            cfg = TrainerConfig(
                **{
                    **base_cfg.__dict__,
                    "alpha": float(alpha),
                    "seed": int(seed),
                }
            )
            run_dir = out_root / f"alpha{alpha:g}_seed{seed}"
            jobs.append((cfg, env_class, run_dir, reuse))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done in pool.map(_sweep_worker, jobs):
                if log is not None:
                    log(f"finished alpha={done[0]:g} seed={done[1]}")
    else:
        for job in jobs:
            _sweep_worker(job)
            if log is not None:
                log(f"finished alpha={job[0].alpha:g} seed={job[0].seed}")

    rows: List[Dict[str, object]] = []
    for cfg, env_cls, run_dir, _ in jobs:
        result = run_pretrain(cfg, env_cls, run_dir, reuse=True)
        for ev in result.eval_rows:
            rows.append(
                {
                    "alpha": cfg.alpha,
                    "seed": cfg.seed,
                    "config": ev["config"],
                    "mean_entropy": ev["mean_entropy"],
                    "cvar_entropy": ev["cvar_entropy"],
                    "var_entropy": ev["var_entropy"],
                }
            )
    rows.sort(key=lambda r: (r["alpha"], r["seed"], r["config"]))
    write_csv(
        out_root / "sweep.csv",
        SWEEP_CSV_COLUMNS,
        [[r[c] for c in SWEEP_CSV_COLUMNS] for r in rows],
    )

    means: Dict[Tuple[float, str], List[float]] = {}
    for r in rows:
        means.setdefault((r["alpha"], r["config"]), []).append(r["mean_entropy"])
    bar_rows = [
        {"alpha": a, "config": c, "mean_entropy": float(np.mean(v))}
        for (a, c), v in sorted(means.items())
    ]
    plot_alpha_sweep(bar_rows, out_root / "alpha_sweep.png")
    return rows


@dataclass(frozen=True)
class FinetuneRun:
    out_dir: Path
    task_index: int
    init_label: str
    final_return: float
    auc: float
    returns: List[float]


def _task_options(task: GoalTask) -> Dict[str, object]:
    return {"config": task.config_name, "goal": list(task.goal), "radius": task.radius}


def run_finetune_task(
    cfg: FinetuneConfig,
    env_class: EnvironmentClass,
    task: GoalTask,
    task_index: int,
    init_params_path: Optional[Path],
    out_dir,
    reuse: bool = False,
) -> FinetuneRun:
    """Fine-tune on one sparse task from a checkpoint or random init."""
    out_dir = Path(out_dir)
    init_label = "random" if init_params_path is None else "checkpoint"
    resolved = {
        "iterations": cfg.iterations,
        "horizon": cfg.horizon,
        "steps_per_iteration": cfg.steps_per_iteration,
        "kl_limit": cfg.kl_limit,
        "discount": cfg.discount,
        "seed": cfg.seed,
        "hidden": list(cfg.hidden),
        "task": _task_options(task),
        "init": str(init_params_path) if init_params_path else "random",
    }

    if reuse and reusable(out_dir, "finetune", resolved):
        with open(out_dir / "run_complete.json", "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        returns = []
        with open(out_dir / "returns.csv", "r", encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                returns.append(float(line.split(",")[1]))
        return FinetuneRun(
            out_dir=out_dir,
            task_index=task_index,
            init_label=init_label,
            final_return=float(summary["final_return"]),
            auc=float(summary["auc"]),
            returns=returns,
        )

    write_manifest(out_dir, "finetune", resolved, cfg.seed,
                   ["returns.csv", "checkpoint_final.bin"])

    config = env_class.configs[env_class.index_of(task.config_name)]
    if init_params_path is not None:
        policy, params = GaussianPolicy.load_checkpoint(init_params_path)
    else:
        from .seeding import DOMAIN_POLICY_INIT, stream

        policy = GaussianPolicy(2, 2, hidden=cfg.hidden)
        params = policy.init_params(stream(cfg.seed, DOMAIN_POLICY_INIT, task_index))

    params, records = finetune(policy, params, config, task, cfg)
    policy.save_checkpoint(params, out_dir / "checkpoint_final.bin")
    write_csv(
        out_dir / "returns.csv",
        RETURNS_CSV_COLUMNS,
        [
            [r.iteration, r.avg_return, r.sampled_kl, r.surrogate_improvement, int(r.accepted)]
            for r in records
        ],
    )
    final_return = evaluate_return(policy, params, config, task, EVAL_RETURN_EPISODES, cfg)
    returns = [r.avg_return for r in records]
    auc = float(np.mean(returns)) if returns else 0.0
    mark_complete(out_dir, {"final_return": final_return, "auc": auc})
    return FinetuneRun(
        out_dir=out_dir,
        task_index=task_index,
        init_label=init_label,
        final_return=final_return,
        auc=auc,
        returns=returns,
    )


def _finetune_worker(args):
    return run_finetune_task(*args)


def run_finetune_suite(
    cfg: FinetuneConfig,
    env_class: EnvironmentClass,
    tasks: Sequence[GoalTask],
    init_params_path: Optional[Path],
    out_root,
    reuse: bool = True,
    workers: int = 1,
) -> List[FinetuneRun]:
    """Fine-tune every task in the list; writes summary.csv and the
    return-curve figure under ``out_root``."""
    out_root = Path(out_root)
    label = "random" if init_params_path is None else "checkpoint"
    jobs = [
        (cfg, env_class, task, i, init_params_path, out_root / f"task{i:02d}", reuse)
        for i, task in enumerate(tasks)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_finetune_worker, jobs))
    else:
        results = [_finetune_worker(job) for job in jobs]
    results.sort(key=lambda r: r.task_index)
    write_csv(
        out_root / "summary.csv",
        FINETUNE_SUMMARY_COLUMNS,
        [[r.task_index, label, r.final_return, r.auc] for r in results],
    )
    plot_return_curves(
        {f"task{r.task_index:02d}": r.returns for r in results},
        out_root / "return_curves.png",
    )
    return results
