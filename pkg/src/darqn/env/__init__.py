"""2-D navigation simulator standing in for the simulated indoor worlds."""
from .noise import NoiseConfig, apply_noise
from .sim import (
    N_ACTIONS,
    Action,
    DroneState,
    EnvConfig,
    NavEnv,
    Observation,
    RewardConfig,
    StepResult,
    raycast_depth,
    render_pseudo_rgb,
    reward,
)
from .world import MATERIAL_TAG, MATERIALS, WorldMap, builtin_worlds, get_world, load_world, parse_world

__all__ = [
    "Action", "DroneState", "EnvConfig", "MATERIALS", "MATERIAL_TAG", "N_ACTIONS", "NavEnv", "NoiseConfig",
    "Observation", "RewardConfig", "StepResult", "WorldMap", "apply_noise", "builtin_worlds", "get_world",
    "load_world", "parse_world", "raycast_depth", "render_pseudo_rgb", "reward",
]
