"""INI-style run configuration: loading, presets, and stable hashing."""

from __future__ import annotations

import configparser
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .environments import EnvironmentClass, GoalTask, load_class_file
from .errors import ConfigError, MissingFileError
from .finetune import FinetuneConfig
from .pretrain import TrainerConfig


def preset_path(name: str) -> Path:
    """Path of a shipped preset file (e.g. 'gridslope.cfg')."""
    return Path(resources.files("riskmaxent") / "presets" / name)


def _read_ini(path: Path) -> configparser.ConfigParser:
    if not path.exists():
        raise MissingFileError(f"no such config file: {path}")
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


def _parse_hidden(raw: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def load_trainer_config(path, overrides: Optional[Dict[str, object]] = None):
    """Read a pre-training config file; returns (TrainerConfig, EnvironmentClass,
    resolved option dict used for hashing)."""
    path = Path(path)
    parser = _read_ini(path)
    overrides = overrides or {}
    try:
        sec = parser["trainer"]
        options = {
            "epochs": sec.getint("epochs"),
            "horizon": sec.getint("horizon"),
            "trajectories": sec.getint("trajectories"),
            "batch_size": sec.getint("batch_size"),
            "alpha": sec.getfloat("alpha"),
            "learning_rate": sec.getfloat("learning_rate"),
            "kl_threshold": sec.getfloat("kl_threshold"),
            "k_neighbors": sec.getint("k_neighbors"),
            "max_offpolicy_iters": sec.getint("max_offpolicy_iters", fallback=30),
            "baseline_enabled": sec.getboolean("baseline", fallback=True),
            "seed": sec.getint("seed", fallback=0),
            "hidden": _parse_hidden(parser.get("policy", "hidden", fallback="300, 300")),
            "class_file": parser.get("environment", "class_file"),
        }
    except (KeyError, configparser.Error, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for key, value in overrides.items():
        if value is None:
            continue
        if key not in options:
            raise ConfigError(f"unknown override {key!r}")
        options[key] = value

    class_path = Path(options["class_file"])
    if not class_path.is_absolute():
        class_path = path.parent / class_path
    if not class_path.exists():
        raise MissingFileError(f"environment class file not found: {class_path}")
    env_class = load_class_file(class_path)

    kwargs = {k: v for k, v in options.items() if k != "class_file"}
    try:
        trainer = TrainerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    resolved = dict(options)
    resolved["class_name"] = env_class.name
    resolved["class_members"] = [c.name for c in env_class.configs]
    resolved["sampling"] = [float(p) for p in env_class.sampling]
    return trainer, env_class, resolved


def config_hash(resolved: Dict[str, object]) -> str:
    """Order-independent digest of a resolved option mapping."""
    canon = json.dumps(resolved, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def load_finetune_config(path, overrides: Optional[Dict[str, object]] = None):
    """Read a fine-tuning config file; returns (FinetuneConfig,
    EnvironmentClass, resolved option dict)."""
    path = Path(path)
    parser = _read_ini(path)
    overrides = overrides or {}
    try:
        sec = parser["finetune"]
        options = {
            "iterations": sec.getint("iterations"),
            "horizon": sec.getint("horizon"),
            "steps_per_iteration": sec.getint("steps_per_iteration"),
            "kl_limit": sec.getfloat("kl_limit"),
            "discount": sec.getfloat("discount"),
            "seed": sec.getint("seed", fallback=0),
            "hidden": _parse_hidden(parser.get("policy", "hidden", fallback="300, 300")),
            "class_file": parser.get("environment", "class_file"),
        }
    except (KeyError, configparser.Error, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in options:
            raise ConfigError(f"unknown override {key!r}")
        options[key] = value
    class_path = Path(options["class_file"])
    if not class_path.is_absolute():
        class_path = path.parent / class_path
    if not class_path.exists():
        raise MissingFileError(f"environment class file not found: {class_path}")
    env_class = load_class_file(class_path)
    kwargs = {k: v for k, v in options.items() if k != "class_file"}
    try:
        finetune_cfg = FinetuneConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    resolved = dict(options)
    resolved["class_name"] = env_class.name
    return finetune_cfg, env_class, resolved


def write_tasks_file(tasks: Sequence[GoalTask], path) -> None:
    parser = configparser.ConfigParser()
    parser["tasks"] = {
        "config": tasks[0].config_name,
        "radius": repr(float(tasks[0].radius)),
        "count": str(len(tasks)),
    }
    for i, task in enumerate(tasks):
        parser[f"task:{i}"] = {"goal": f"{task.goal[0]!r}, {task.goal[1]!r}"}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def load_tasks_file(path) -> List[GoalTask]:
    path = Path(path)
    parser = _read_ini(path)
    try:
        head = parser["tasks"]
        config_name = head["config"]
        radius = float(head["radius"])
        count = int(head["count"])
        tasks = []
        for i in range(count):
            x, y = (float(v) for v in parser[f"task:{i}"]["goal"].split(","))
            tasks.append(GoalTask(config_name=config_name, goal=(x, y), radius=radius))
        return tasks
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"{path}: invalid tasks file: {exc}") from exc
