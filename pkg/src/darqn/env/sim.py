"""Partially observable navigation simulator with the obstacle-avoidance reward."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError
from . import geometry
from .noise import NoiseConfig, apply_noise
from .render import depth_image, pseudo_rgb
from .world import WorldMap


class Action(enum.IntEnum):
    GO_STRAIGHT = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2


N_ACTIONS = len(Action)


@dataclass
class RewardConfig:
    sigma: float = 1.5
    r_drone: float = 0.292
    straight_bonus: float = 0.5
    collision_penalty: float = -10.0
    max_steps: int = 1000

    def __post_init__(self):
        if not (self.sigma > self.r_drone > 0):
            raise ConfigError("reward config needs sigma > r_drone > 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")


@dataclass
class EnvConfig:
    n_rays: int = 32
    fov_deg: float = 90.0
    d_max: float = 10.0
    step_size: float = 0.25
    turn_deg: float = 15.0
    turn_advance: float = 0.5        # fraction of step_size moved while turning
    obs_mode: str = "rays"           # "rays" or "image"
    image_height: int = 32
    distance_mode: str = "geometry"  # d_i from true geometry, or "observation" (nearest observed depth)
    reward: RewardConfig = field(default_factory=RewardConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if isinstance(self.reward, dict):
            self.reward = RewardConfig(**self.reward)
        if isinstance(self.noise, dict):
            self.noise = NoiseConfig(**self.noise)
        if self.obs_mode not in ("rays", "image"):
            raise ConfigError(f"obs_mode must be 'rays' or 'image', got {self.obs_mode!r}")
        if self.distance_mode not in ("geometry", "observation"):
            raise ConfigError(f"distance_mode must be 'geometry' or 'observation', got {self.distance_mode!r}")
        if self.n_rays < 1 or self.d_max <= 0 or self.step_size < 0:
            raise ConfigError("n_rays, d_max must be positive and step_size non-negative")

    @property
    def fov(self):
        return math.radians(self.fov_deg)

    @property
    def observation_shape(self):
        return (self.n_rays,) if self.obs_mode == "rays" else (self.image_height, self.n_rays)


@dataclass
class DroneState:
    x: float
    y: float
    heading: float
    alive: bool = True


@dataclass
class Observation:
    depth: np.ndarray       # [R] or [H, R] meters
    material: np.ndarray    # [R] int tags

    def normalized(self, d_max):
        return self.depth / d_max


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


def reward(d_i, action, collided, config: RewardConfig):
    """``min(1, (d_i - r_drone) / (sigma - r_drone))`` plus the straight bonus; penalty on collision."""
    if collided:
        return float(config.collision_penalty)
    r = min(1.0, (d_i - config.r_drone) / (config.sigma - config.r_drone))
    if int(action) == Action.GO_STRAIGHT:
        r += config.straight_bonus
    return r


@dataclass
class _Mover:
    x: float
    y: float
    heading: float
    radius: float
    speed: float
    turn_std: float
    material: int


class NavEnv:
    """One episode stream in one world.

    ``reset`` / ``step`` follow the usual episodic protocol; all randomness
    (spawn, movers, sensor noise) comes from independent substreams of the
    reset seed.
    """

    def __init__(self, world: WorldMap, config: EnvConfig | None = None):
        self.world = world
        self.config = config or EnvConfig()
        self.state = None
        self.movers = []
        self.steps = 0
        self.done = True

    # ------------------------------------------------------------ geometry helpers

    def _dynamic_circles(self):
        if not self.movers:
            return self.world.circles, self.world.circle_material
        dyn = np.array([[m.x, m.y, m.radius] for m in self.movers])
        mat = np.array([m.material for m in self.movers], dtype=int)
        return np.vstack([self.world.circles, dyn]), np.concatenate([self.world.circle_material, mat])

    def nearest_distance(self, x=None, y=None):
        if x is None:
            x, y = self.state.x, self.state.y
        circles, _ = self._dynamic_circles()
        return geometry.nearest_distance((x, y), self.world.segments, circles)

    def _static_clearance(self, x, y):
        return geometry.nearest_distance((x, y), self.world.segments, self.world.circles)

    # ------------------------------------------------------------ observations

    def raycast(self):
        if self.state is None or not self.state.alive:
            raise ContractError("raycast needs a live drone")
        if not self.world.inside(self.state.x, self.state.y):
            raise ContractError("drone is outside the world bounds")
        c = self.config
        circles, cmat = self._dynamic_circles()
        depth, tags = geometry.cast((self.state.x, self.state.y), self.state.heading, c.n_rays, c.fov,
                                    c.d_max, self.world.segments, self.world.segment_material, circles, cmat)
        return depth, tags

    def observe(self):
        depth, tags = self.raycast()
        c = self.config
        if c.noise.enabled:
            depth = apply_noise(depth, c.noise, self._noise_rng, c.d_max)
        if c.obs_mode == "image":
            depth = depth_image(depth, c.d_max, c.image_height)
        return Observation(depth, tags)

    def render_pseudo_rgb(self):
        """(pseudo-RGB ``[3, H, R]``, clean depth ``[1, H, R]`` normalized by d_max)."""
        depth, tags = self.raycast()
        c = self.config
        x = pseudo_rgb(depth, tags, c.d_max, c.image_height)
        y = depth_image(depth, c.d_max, c.image_height)[None] / c.d_max
        return x, y

    # ------------------------------------------------------------ episode API

    def reset(self, seed=None):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        spawn_ss, mover_ss, noise_ss = ss.spawn(3)
        spawn_rng = np.random.default_rng(spawn_ss)
        self._mover_rng = np.random.default_rng(mover_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self.movers = [_Mover(m.x, m.y, self._mover_rng.uniform(0, 2 * math.pi), m.radius, m.speed,
                              m.turn_std, m.material) for m in self.world.movers]
        x0, y0, x1, y1 = self.world.spawn
        h0, h1 = self.world.heading_range
        r = self.config.reward.r_drone
        for _ in range(1000):
            x = spawn_rng.uniform(x0, x1) if x1 > x0 else x0
            y = spawn_rng.uniform(y0, y1) if y1 > y0 else y0
            heading = spawn_rng.uniform(h0, h1) if h1 > h0 else h0
            if self.world.inside(x, y) and self.nearest_distance(x, y) > r:
                break
        else:
            raise ConfigError(f"world {self.world.name!r}: spawn region is blocked")
        self.state = DroneState(x, y, heading)
        self.steps = 0
        self.done = False
        return self.state, self.observe()

    def _move_movers(self):
        x0, y0, x1, y1 = self.world.bounds
        for m in self.movers:
            if m.speed == 0:
                continue
            m.heading += self._mover_rng.normal(0.0, m.turn_std)
            nx = m.x + m.speed * math.cos(m.heading)
            ny = m.y + m.speed * math.sin(m.heading)
            inside = x0 + m.radius <= nx <= x1 - m.radius and y0 + m.radius <= ny <= y1 - m.radius
            if inside and self._static_clearance(nx, ny) >= m.radius:
                m.x, m.y = nx, ny
            else:
                m.heading += math.pi

    def step(self, action):
        if self.done or self.state is None:
            raise ContractError("step() called on a finished episode; call reset()")
        action = Action(int(action))
        c = self.config
        s = self.state
        if action == Action.GO_STRAIGHT:
            advance = c.step_size
        else:
            s.heading += math.radians(c.turn_deg) * (1 if action == Action.TURN_LEFT else -1)
            advance = c.step_size * c.turn_advance
        s.x += advance * math.cos(s.heading)
        s.y += advance * math.sin(s.heading)
        self._move_movers()
        self.steps += 1

        d_geom = self.nearest_distance()
        collided = d_geom < c.reward.r_drone or not self.world.inside(s.x, s.y)
        if collided:
            s.alive = False
            obs = None
            d_i = d_geom
        else:
            obs = self.observe()
            d_i = d_geom if c.distance_mode == "geometry" else float(np.min(obs.depth))
        reached = not collided and self.world.in_goal(s.x, s.y)
        r = reward(d_i, action, collided, c.reward)
        self.done = collided or reached or self.steps >= c.reward.max_steps
        if obs is None:
            # terminal frame: keep the observation shape so windows stay well formed
            obs = Observation(np.full(c.observation_shape, 1e-6), np.zeros(c.n_rays, dtype=int))
        info = {"distance": d_i, "action": int(action), "collision": collided,
                "steps": self.steps, "reached_goal": reached}
        return StepResult(obs, r, self.done, info)


def render_pseudo_rgb(world, drone: DroneState, config: EnvConfig | None = None, movers=()):
    """Module-level form of :meth:`NavEnv.render_pseudo_rgb` for a given pose."""
    env = NavEnv(world, config)
    env.state = drone
    env.movers = list(movers)
    return env.render_pseudo_rgb()


def raycast_depth(world, drone: DroneState, config: EnvConfig | None = None, movers=()):
    env = NavEnv(world, config)
    env.state = drone
    env.movers = list(movers)
    depth, tags = env.raycast()
    return Observation(depth, tags)
