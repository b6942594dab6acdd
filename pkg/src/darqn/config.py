"""One YAML file describes a run; command-line flags override it.

Example::

    seed: 7
    out: runs/ta-room
    variant: drqn_ta            # dqn | drqn | drqn_ta | random | straight
    world: room-scattered       # evaluation world
    curriculum:                 # training worlds in order
      - {world: hallway-straight, steps: 20000}
      - room-scattered          # bare names share the remaining agent.total_steps
    agent: {learning_rate: 1.0e-4, net: {hidden_size: 32}}
    env: {noise: {enabled: true}}
    gan: {epochs: 20}
"""
from __future__ import annotations

import copy
import re
from dataclasses import MISSING, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .agent import AgentConfig
from .env import EnvConfig, get_world
from .errors import ConfigError
from .gan import GanConfig
from .runner import Stage, TrainConfig

POLICY_VARIANTS = ("dqn", "drqn", "drqn_ta", "random", "straight")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-4`` style numbers as floats (YAML 1.1 wants ``1.0e-4``)."""


_Loader.yaml_implicit_resolvers = {k: list(v) for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _load_yaml(text):
    return yaml.load(text, Loader=_Loader)


def _check_keys(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{where}' must be a mapping, got {raw!r}")
    known = {f.name: f for f in fields(cls)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key '{where}.{key}'; expected one of {', '.join(sorted(known))}")
        factory = known[key].default_factory
        if factory is not MISSING and isinstance(value, dict) and is_dataclass(factory()):
            _check_keys(type(factory()), value, f"{where}.{key}")


def _typed(cls, raw, where, **extra):
    _check_keys(cls, raw, where)
    try:
        return cls(**raw, **extra)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{where}' section: {e}") from None


@dataclass
class RunConfig:
    seed: int | None = None
    out: str = "runs/default"
    variant: str = "drqn_ta"
    world: str = "room-scattered"
    curriculum: list = field(default_factory=list)
    agent: dict = field(default_factory=dict)
    env: dict = field(default_factory=dict)
    gan: dict = field(default_factory=dict)
    n_envs: int = 1
    checkpoint_every: int = 50_000
    episodes: int = 200
    checkpoint: str | None = None

    def __post_init__(self):
        if self.variant not in POLICY_VARIANTS:
            raise ConfigError(f"variant must be one of {POLICY_VARIANTS}, got {self.variant!r}")
        if self.seed is not None:
            self.seed = int(self.seed)
            if not 0 <= self.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")

    def require_seed(self):
        if self.seed is None:
            raise ConfigError("a seed is required (set 'seed' in the config or pass --seed)")
        return self.seed

    # ------------------------------------------------------------ typed views

    def env_config(self):
        return _typed(EnvConfig, copy.deepcopy(self.env), "env")

    def agent_config(self, env: EnvConfig | None = None):
        env = env or self.env_config()
        raw = copy.deepcopy(self.agent)
        _check_keys(AgentConfig, raw, "agent")
        net = raw.pop("net", {}) or {}
        net.setdefault("input_shape", env.observation_shape)
        if self.variant in ("dqn", "drqn", "drqn_ta"):
            net["variant"] = self.variant
        return _typed(AgentConfig, raw, "agent", net=net)

    def gan_config(self):
        return _typed(GanConfig, copy.deepcopy(self.gan), "gan")

    def stages(self, total_steps):
        items = self.curriculum or [self.world]
        fixed = sum(int(it["steps"]) for it in items if isinstance(it, dict) and "steps" in it)
        bare = [it for it in items if not (isinstance(it, dict) and "steps" in it)]
        share, extra = divmod(max(total_steps - fixed, 0), len(bare)) if bare else (0, 0)
        stages = []
        for it in items:
            if isinstance(it, dict) and "steps" in it:
                stages.append(Stage(str(it["world"]), int(it["steps"])))
            else:
                name = it["world"] if isinstance(it, dict) else str(it)
                n = share + (1 if extra > 0 else 0)
                extra -= 1
                stages.append(Stage(name, n))
        for s in stages:
            get_world(s.world)   # fail early, with the world file's own diagnostics
        return stages

    def train_config(self):
        env = self.env_config()
        agent = self.agent_config(env)
        return TrainConfig(stages=self.stages(agent.total_steps), agent=agent, env=env,
                           n_envs=self.n_envs, checkpoint_every=self.checkpoint_every,
                           seed=self.require_seed())

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigError(f"override {dotted!r}: {k!r} is not a mapping")
    d[keys[-1]] = value


def load_run_config(path=None, overrides=None, assignments=()):
    """Read ``path`` (YAML), then apply ``overrides`` (dict) and ``key.path=value`` strings."""
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = _load_yaml(p.read_text()) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"{p}:{mark.line + 1}" if mark else str(p)
            raise ConfigError(f"{where}: invalid YAML ({getattr(e, 'problem', e)})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
    for a in assignments:
        if "=" not in a:
            raise ConfigError(f"override {a!r} must look like key.path=value")
        k, v = a.split("=", 1)
        _set_path(data, k.strip(), _load_yaml(v))
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    unknown = set(data) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None
