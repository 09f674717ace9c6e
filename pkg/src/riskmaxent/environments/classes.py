"""Environment classes: ordered configuration lists with a sampling law.

Classes are described by a declarative INI file with one ``[config:<name>]``
section per member. The two reference classes of the experiments (the
two-room-slope pair and the ten-member multigrid family) are built
programmatically from fixed seeds and shipped as preset files.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..errors import ConfigError
from .gridworld import GridworldConfig, SlopeSpec

MAX_STEP = 0.2
WALL_THICKNESS = 0.04
GAP_WIDTH = 0.3


@dataclass(frozen=True)
class EnvironmentClass:
    name: str
    configs: List[GridworldConfig]
    sampling: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.sampling, dtype=np.float64)
        if len(self.configs) == 0:
            raise ValueError("environment class must contain at least one config")
        if p.shape != (len(self.configs),):
            raise ValueError("sampling distribution length must match config count")
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-12):
            raise ValueError("sampling distribution must be nonnegative and sum to 1")
        object.__setattr__(self, "sampling", p)

    def index_of(self, name: str) -> int:
        for i, cfg in enumerate(self.configs):
            if cfg.name == name:
                return i
        raise KeyError(f"no config named {name!r}")


def sample_environment(env_class: EnvironmentClass, rng: np.random.Generator) -> int:
    """Draw a configuration index according to the class sampling law."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(env_class.sampling), u, side="right").clip(
        0, len(env_class.configs) - 1
    ))


def four_room_walls(
    side: float = 2.0,
    cross_x: float = 1.0,
    cross_y: float = 1.0,
    gap_width: float = GAP_WIDTH,
    gap_centers: Sequence[float] | None = None,
    thickness: float = WALL_THICKNESS,
) -> np.ndarray:
    """Wall rectangles of a four-room layout with one hallway per half-wall.

    ``gap_centers`` holds the hallway centers along (lower vertical, upper
    vertical, left horizontal, right horizontal) in absolute coordinates;
    the default centers every hallway on its half-wall midpoint.
    """
    if gap_centers is None:
        gap_centers = (
            cross_y / 2.0,
            (cross_y + side) / 2.0,
            cross_x / 2.0,
            (cross_x + side) / 2.0,
        )
    g1, g2, g3, g4 = gap_centers
    ht = thickness / 2.0
    hw = gap_width / 2.0
    boxes = [
        # vertical wall pieces at x = cross_x
        (cross_x - ht, 0.0, cross_x + ht, g1 - hw),
        (cross_x - ht, g1 + hw, cross_x + ht, g2 - hw),
        (cross_x - ht, g2 + hw, cross_x + ht, side),
        # horizontal wall pieces at y = cross_y
        (0.0, cross_y - ht, g3 - hw, cross_y + ht),
        (g3 + hw, cross_y - ht, g4 - hw, cross_y + ht),
        (g4 + hw, cross_y - ht, side, cross_y + ht),
    ]
    arr = np.array(boxes, dtype=np.float64)
    if np.any(arr[:, 0] > arr[:, 2]) or np.any(arr[:, 1] > arr[:, 3]):
        raise ValueError("hallway gaps overlap a wall end; adjust centers")
    return arr


def build_gridslope_class() -> EnvironmentClass:
    """Two four-room configurations: south slope (easy) and north slope
    (adverse), both with the slope confined to the upper half and a shared
    initial square in the top-right corner."""
    walls = four_room_walls()
    common = dict(side=2.0, max_step=MAX_STEP, walls=walls, initial_region=(1.7, 1.7, 1.9, 1.9))
    gws = GridworldConfig(
        name="gws",
        slope=SlopeSpec("S", "upper-half", MAX_STEP / 2.0, MAX_STEP / 20.0),
        **common,
    )
    gwn = GridworldConfig(
        name="gwn",
        slope=SlopeSpec("N", "upper-half", MAX_STEP / 2.0, MAX_STEP / 20.0),
        **common,
    )
    return EnvironmentClass(name="gridslope", configs=[gws, gwn], sampling=np.array([0.8, 0.2]))


_MULTIGRID_SEED = 20240117
_MULTIGRID_SLOPES = [
    ("S", "full"),
    ("S", "full"),
    ("E", "full"),
    ("E", "full"),
    ("E", "full"),
    ("SE", "full"),
    ("none", "full"),
    ("none", "full"),
    ("none", "full"),
]


def build_multigrid_class() -> EnvironmentClass:
    """Ten-member family: one adverse north-slope four-room grid plus nine
    variants with perturbed wall layouts and full-region slopes (two south,
    three east, one south-east, three flat), sampled uniformly.

    Layout perturbations (cross position and hallway centers) come from a
    fixed seed so the family is a constant of the package.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(_MULTIGRID_SEED)))
    side = 2.0
    init = (1.7, 1.7, 1.9, 1.9)
    configs = [
        GridworldConfig(
            name="gwn",
            side=side,
            max_step=MAX_STEP,
            walls=four_room_walls(),
            slope=SlopeSpec("N", "upper-half", MAX_STEP / 2.6, MAX_STEP / 20.0),
            initial_region=init,
        )
    ]
    for i, (direction, region) in enumerate(_MULTIGRID_SLOPES):
        cross_x = rng.uniform(0.8, 1.2)
        cross_y = rng.uniform(0.8, 1.2)
        margin = GAP_WIDTH / 2.0 + 0.05
        centers = (
            rng.uniform(margin, cross_y - margin),
            rng.uniform(cross_y + margin, side - margin),
            rng.uniform(margin, cross_x - margin),
            rng.uniform(cross_x + margin, side - margin),
        )
        configs.append(
            GridworldConfig(
                name=f"grid{i + 1}",
                side=side,
                max_step=MAX_STEP,
                walls=four_room_walls(side, cross_x, cross_y, GAP_WIDTH, centers),
                slope=SlopeSpec(direction, region, MAX_STEP / 3.2, MAX_STEP / 20.0),
                initial_region=init,
            )
        )
    return EnvironmentClass(
        name="multigrid", configs=configs, sampling=np.full(10, 0.1)
    )


# -- declarative file format -------------------------------------------------


def write_class_file(env_class: EnvironmentClass, path) -> None:
    parser = configparser.ConfigParser()
    parser["class"] = {
        "name": env_class.name,
        "configs": ", ".join(cfg.name for cfg in env_class.configs),
        "sampling_distribution": ", ".join(repr(float(p)) for p in env_class.sampling),
    }
    for cfg in env_class.configs:
        section = f"config:{cfg.name}"
        wall_lines = "\n".join(
            " ".join(repr(float(v)) for v in row) for row in cfg.walls
        )
        parser[section] = {
            "side": repr(cfg.side),
            "max_step": repr(cfg.max_step),
            "slope_direction": cfg.slope.direction,
            "slope_region": cfg.slope.region,
            "slope_mean": repr(cfg.slope.mean),
            "slope_std": repr(cfg.slope.std),
            "initial_region": ", ".join(repr(float(v)) for v in cfg.initial_region),
            "walls": "\n" + wall_lines if wall_lines else "",
        }
    buf = io.StringIO()
    parser.write(buf)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def load_class_file(path) -> EnvironmentClass:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        head = parser["class"]
        names = [n.strip() for n in head["configs"].split(",") if n.strip()]
        sampling = np.array([float(v) for v in head["sampling_distribution"].split(",")])
        configs = []
        for name in names:
            sec = parser[f"config:{name}"]
            wall_rows = [
                [float(v) for v in line.split()]
                for line in sec.get("walls", "").strip().splitlines()
                if line.strip()
            ]
            configs.append(
                GridworldConfig(
                    name=name,
                    side=float(sec["side"]),
                    max_step=float(sec["max_step"]),
                    walls=np.array(wall_rows, dtype=np.float64).reshape(-1, 4),
                    slope=SlopeSpec(
                        sec["slope_direction"],
                        sec["slope_region"],
                        float(sec["slope_mean"]),
                        float(sec["slope_std"]),
                    ),
                    initial_region=tuple(
                        float(v) for v in sec["initial_region"].split(",")
                    ),
                )
            )
        return EnvironmentClass(name=head["name"], configs=configs, sampling=sampling)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid environment class file: {exc}") from exc
