"""Greedy-GQ variants: vanilla two-timescale, nested-loop and mini-batch."""

from .updates import (
    LearnerState,
    NestedConfig,
    StepSchedule,
    batch_directions,
    g_direction,
    h_direction,
    make_schedule,
    project,
    td_error,
    vanilla_step,
)
from .runners import draw_stop_index, inner_loop, run_minibatch, run_nested_loop, run_vanilla

__all__ = [
    "LearnerState",
    "NestedConfig",
    "StepSchedule",
    "batch_directions",
    "draw_stop_index",
    "g_direction",
    "h_direction",
    "inner_loop",
    "make_schedule",
    "project",
    "run_minibatch",
    "run_nested_loop",
    "run_vanilla",
    "td_error",
    "vanilla_step",
]
