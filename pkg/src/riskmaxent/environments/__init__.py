from .gridworld import (
    GoalTask,
    GridworldConfig,
    SlopeSpec,
    free_space_mask,
    reset,
    reset_batch,
    sample_goal,
    step,
    step_batch,
    task_reward,
)
from .tabular import TabularCMP, exact_marginal
from .classes import (
    EnvironmentClass,
    build_gridslope_class,
    build_multigrid_class,
    load_class_file,
    sample_environment,
    write_class_file,
)

__all__ = [
    "EnvironmentClass",
    "GoalTask",
    "GridworldConfig",
    "SlopeSpec",
    "TabularCMP",
    "build_gridslope_class",
    "build_multigrid_class",
    "exact_marginal",
    "free_space_mask",
    "load_class_file",
    "reset",
    "reset_batch",
    "sample_environment",
    "sample_goal",
    "step",
    "step_batch",
    "task_reward",
    "write_class_file",
]
