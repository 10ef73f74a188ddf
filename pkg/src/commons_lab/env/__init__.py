"""Deterministic common-pool resource gridworld."""

from commons_lab.env.config import PRESETS, EnvConfig, preset
from commons_lab.env.engine import (
    NUM_ACTIONS,
    Action,
    AgentBody,
    StepResult,
    WorldState,
    count_apples_within,
    create_env,
    regrowth_update,
    step,
)
from commons_lab.env.maps import GridMap, default_map, parse_map
from commons_lab.env.render import render_global, render_observation

__all__ = [
    "PRESETS", "EnvConfig", "preset", "NUM_ACTIONS", "Action", "AgentBody", "StepResult",
    "WorldState", "count_apples_within", "create_env", "regrowth_update", "step", "GridMap",
    "default_map", "parse_map", "render_global", "render_observation",
]
