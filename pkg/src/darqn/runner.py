"""Training loop, greedy evaluation and baseline policies."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentConfig, EpsilonSchedule, Learner, ObservationWindow, ReplayBuffer, Transition, greedy
from .env import Action, EnvConfig, NavEnv, get_world
from .errors import ConfigError, NumericError
from .nn import NetConfig, q_forward, save_checkpoint

TRAIN_LOG_HEADER = "# darqn training log v1"
TRAIN_LOG_FIELDS = ["step", "epsilon", "loss", "episode_return", "steps_until_collision", "collided",
                    "world", "event"]
EVAL_HEADER = "# darqn eval episodes v1"
EVAL_FIELDS = ["episode", "steps_until_collision", "collided", "reached_goal", "episode_return",
               "turn_pairs_opposite", "action_pairs"]
ATTENTION_HEADER = "# darqn attention weights v1"


@dataclass
class Stage:
    world: str
    steps: int


@dataclass
class TrainConfig:
    stages: list = field(default_factory=lambda: [Stage("room-scattered", 200_000)])
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    n_envs: int = 1
    checkpoint_every: int = 50_000
    seed: int = 0

    def __post_init__(self):
        self.stages = [s if isinstance(s, Stage) else Stage(**s) for s in self.stages]
        if isinstance(self.agent, dict):
            self.agent = AgentConfig(**self.agent)
        if isinstance(self.env, dict):
            self.env = EnvConfig(**self.env)
        if not self.stages:
            raise ConfigError("training needs at least one curriculum stage")
        if any(s.steps < 0 for s in self.stages):
            raise ConfigError("stage step counts must be non-negative")
        if self.n_envs < 1 or self.checkpoint_every < 1:
            raise ConfigError("n_envs and checkpoint_every must be positive")
        if self.agent.net.input_shape != self.env.observation_shape:
            raise ConfigError(f"network input {self.agent.net.input_shape} does not match "
                              f"environment observation {self.env.observation_shape}")

    @property
    def total_steps(self):
        return sum(s.steps for s in self.stages)


@dataclass
class TrainResult:
    learner: Learner
    log: list
    checkpoints: list


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, fields, rows):
    buf = io.StringIO()
    buf.write(header + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f)) for f in fields])
    Path(path).write_text(buf.getvalue())


def train(cfg: TrainConfig, out_dir=None, progress=None) -> TrainResult:
    """Act-then-learn loop over the world curriculum.

    All randomness flows from ``cfg.seed``: parameter init, episode resets,
    exploration and replay sampling each get their own substream.
    """
    acfg = cfg.agent
    root = np.random.SeedSequence(cfg.seed)
    init_ss, episode_ss, act_ss, replay_ss = root.spawn(4)
    learner = Learner(acfg, seed=np.random.default_rng(init_ss).integers(2**63))
    learner.sync_steps.clear()
    episode_seeds = np.random.default_rng(episode_ss)
    act_rng = np.random.default_rng(act_ss)
    replay_rng = np.random.default_rng(replay_ss)
    buffer = ReplayBuffer(acfg.replay_capacity)
    schedule = EpsilonSchedule.from_config(acfg)
    d_max = cfg.env.d_max
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    log, checkpoints = [], []
    losses = []
    step = 0

    def checkpoint(name):
        if out is None:
            return
        path = out / "checkpoints" / name
        save_checkpoint(path, learner.params, acfg.net, {"step": step, "updates": learner.step})
        checkpoints.append(path)

    for stage_idx, stage in enumerate(cfg.stages):
        world = get_world(stage.world)
        envs = [NavEnv(world, cfg.env) for _ in range(cfg.n_envs)]
        wins = [ObservationWindow(acfg.window_len) for _ in envs]
        ep_return = [0.0] * len(envs)
        current = []
        for env, win in zip(envs, wins):
            _, obs = env.reset(int(episode_seeds.integers(2**63)))
            current.append(win.reset(obs.normalized(d_max)))
        stage_end = step + stage.steps
        while step < stage_end:
            eps = schedule(step)
            windows = np.stack([np.stack(w) for w in current])
            explore = act_rng.random(len(envs)) < eps
            rand_a = act_rng.integers(acfg.net.n_actions, size=len(envs))
            if explore.all():
                actions = rand_a
            else:
                actions = np.where(explore, rand_a, greedy(q_forward(windows, learner.params, acfg.net).data))
            for i, env in enumerate(envs):
                if step >= stage_end:
                    break
                res = env.step(int(actions[i]))
                nxt = wins[i].push(res.observation.normalized(d_max))
                buffer.add(Transition(current[i], int(actions[i]), res.reward, nxt, res.done))
                ep_return[i] += res.reward
                step += 1
                if res.done:
                    log.append({"step": step, "epsilon": eps,
                                "loss": float(np.mean(losses)) if losses else None,
                                "episode_return": ep_return[i], "steps_until_collision": env.steps,
                                "collided": int(res.info["collision"]), "world": world.name,
                                "event": "episode"})
                    losses.clear()
                    ep_return[i] = 0.0
                    _, obs = env.reset(int(episode_seeds.integers(2**63)))
                    nxt = wins[i].reset(obs.normalized(d_max))
                current[i] = nxt
                if len(buffer) >= max(acfg.warmup, acfg.batch_size) and step % acfg.train_every == 0:
                    try:
                        loss = learner.train_step(buffer, replay_rng)
                    except NumericError as e:
                        raise NumericError(f"{e} (environment step {step})") from None
                    if loss is not None:
                        losses.append(loss)
                if step % cfg.checkpoint_every == 0:
                    checkpoint(f"step_{step:09d}.ckpt")
                if progress is not None and step % 1000 == 0:
                    progress(step, log)
        if stage_idx + 1 < len(cfg.stages):
            log.append({"step": step, "epsilon": schedule(step), "loss": None, "episode_return": None,
                        "steps_until_collision": None, "collided": None,
                        "world": cfg.stages[stage_idx + 1].world, "event": "switch"})
    checkpoint("final.ckpt")
    if out is not None:
        write_csv(out / "train_log.csv", TRAIN_LOG_HEADER, TRAIN_LOG_FIELDS, log)
    return TrainResult(learner, log, checkpoints)


# ---------------------------------------------------------------- policies


class RandomPolicy:
    """Each action equally likely."""
    window_len = 1

    def __init__(self, n_actions=3):
        self.n_actions = n_actions

    def act(self, windows, rngs):
        return np.array([r.integers(self.n_actions) for r in rngs])


class StraightPolicy:
    """Always go straight."""
    window_len = 1

    def act(self, windows, rngs):
        return np.full(len(windows), int(Action.GO_STRAIGHT))


class GreedyPolicy:
    """Argmax of the learned Q-values (epsilon = 0)."""

    def __init__(self, params, net: NetConfig):
        self.params = params
        self.net = net
        self.window_len = net.window_len
        self.last_attention = None

    def act(self, windows, rngs):
        q, attn = q_forward(windows, self.params, self.net, return_attention=True)
        self.last_attention = None if attn is None else attn.data
        return greedy(q.data)


BASELINES = {"random": RandomPolicy, "straight": StraightPolicy}


@dataclass
class EvalReport:
    steps: list
    collided: list
    reached_goal: list
    returns: list
    opposite_pairs: list
    action_pairs: list
    action_histogram: list

    @property
    def episodes(self):
        return len(self.steps)

    @property
    def mean(self):
        return float(np.mean(self.steps))

    @property
    def std(self):
        """Population standard deviation of steps-until-collision."""
        return float(np.std(self.steps))

    @property
    def collision_rate(self):
        return float(np.mean(self.collided))

    @property
    def wobble_index(self):
        """Opposite-turn adjacent action pairs over all adjacent pairs."""
        total = sum(self.action_pairs)
        return sum(self.opposite_pairs) / total if total else 0.0

    def summary(self):
        hist = ", ".join(f"{a.name.lower()}={n}" for a, n in zip(Action, self.action_histogram))
        return (f"episodes: {self.episodes}\n"
                f"steps until collision: {self.mean:.2f} +- {self.std:.2f}\n"
                f"collision rate: {self.collision_rate:.3f}\n"
                f"goal rate: {float(np.mean(self.reached_goal)):.3f}\n"
                f"wobble index: {self.wobble_index:.4f}\n"
                f"actions: {hist}\n")

    def rows(self):
        return [{"episode": i, "steps_until_collision": s, "collided": c, "reached_goal": g,
                 "episode_return": r, "turn_pairs_opposite": o, "action_pairs": p}
                for i, (s, c, g, r, o, p) in enumerate(zip(self.steps, self.collided, self.reached_goal,
                                                           self.returns, self.opposite_pairs, self.action_pairs))]

    def write(self, out_dir, stem="eval"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{stem}.csv", EVAL_HEADER, EVAL_FIELDS, self.rows())
        (out / f"{stem}_summary.txt").write_text(self.summary())

    def to_dict(self):
        return asdict(self)


def _is_opposite(a, b):
    return {a, b} == {int(Action.TURN_LEFT), int(Action.TURN_RIGHT)}


def evaluate(policy, world, episodes, seed, env_cfg: EnvConfig | None = None, record_attention=False):
    """Run ``episodes`` episodes in lockstep; episode ``k`` uses seed substream ``k``.

    Returns an :class:`EvalReport` (and the attention rows of episode 0 when
    ``record_attention`` is set and the policy exposes them).
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    env_cfg = env_cfg or EnvConfig()
    if isinstance(world, str):
        world = get_world(world)
    subs = np.random.SeedSequence(seed).spawn(episodes)
    env_seeds, policy_rngs = [], []
    for ss in subs:
        a, b = ss.spawn(2)
        env_seeds.append(a)
        policy_rngs.append(np.random.default_rng(b))
    envs = [NavEnv(world, env_cfg) for _ in range(episodes)]
    wins = [ObservationWindow(policy.window_len) for _ in range(episodes)]
    current = []
    for env, win, s in zip(envs, wins, env_seeds):
        _, obs = env.reset(s)
        current.append(win.reset(obs.normalized(env_cfg.d_max)))
    returns = [0.0] * episodes
    collided = [0] * episodes
    goal = [0] * episodes
    last = [None] * episodes
    opposite = [0] * episodes
    pairs = [0] * episodes
    hist = np.zeros(len(Action), dtype=int)
    attention_rows = []
    active = list(range(episodes))
    while active:
        windows = np.stack([np.stack(current[i]) for i in active])
        actions = policy.act(windows, [policy_rngs[i] for i in active])
        if record_attention and active[0] == 0 and getattr(policy, "last_attention", None) is not None:
            attention_rows.append(policy.last_attention[0].copy())
        still = []
        for i, a in zip(active, actions):
            a = int(a)
            res = envs[i].step(a)
            hist[a] += 1
            if last[i] is not None:
                pairs[i] += 1
                opposite[i] += _is_opposite(last[i], a)
            last[i] = a
            returns[i] += res.reward
            if res.done:
                collided[i] = int(res.info["collision"])
                goal[i] = int(res.info["reached_goal"])
            else:
                current[i] = wins[i].push(res.observation.normalized(env_cfg.d_max))
                still.append(i)
        active = still
    report = EvalReport([e.steps for e in envs], collided, goal, returns, opposite, pairs, hist.tolist())
    if record_attention:
        return report, attention_rows
    return report


def write_attention_csv(path, rows):
    L = len(rows[0]) if rows else 0
    fields = ["step"] + [f"w{j}" for j in range(L)]
    write_csv(path, ATTENTION_HEADER, fields,
              [{"step": k, **{f"w{j}": float(v) for j, v in enumerate(r)}} for k, r in enumerate(rows)])
