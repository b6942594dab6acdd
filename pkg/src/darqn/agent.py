"""Q-learning machinery: replay, epsilon-greedy control, TD targets, optimisation.

Also holds the one-entry tabular Q update used as an oracle on small MDPs.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, NumericError
from .nn import NetConfig, QNetworkParams, init_params, q_forward
from .tensor import Tape, Tensor


@dataclass
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 32
    learning_rate: float = 1e-4
    target_sync_every: int = 400
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_steps: int = 20_000
    optimizer: str = "adam"          # "adam" or "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    replay_capacity: int = 50_000
    warmup: int = 1_000              # transitions collected before learning starts
    train_every: int = 1             # environment steps per gradient update
    total_steps: int = 200_000       # environment steps
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if isinstance(self.net, dict):
            self.net = NetConfig(**self.net)
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ConfigError("need 0 <= epsilon_end <= epsilon_start <= 1")
        for name in ("batch_size", "target_sync_every", "anneal_steps", "replay_capacity", "train_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate < 0 or self.warmup < 0 or self.total_steps < 0:
            raise ConfigError("learning_rate, warmup and total_steps must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @property
    def window_len(self):
        return self.net.window_len

    @property
    def input_size(self):
        return self.net.input_shape

    def to_dict(self):
        return asdict(self)


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 20_000

    def __call__(self, step):
        frac = max(step, 0) / self.anneal_steps
        if frac >= 1:
            return self.end
        return self.start - (self.start - self.end) * frac

    @classmethod
    def from_config(cls, cfg: AgentConfig):
        return cls(cfg.epsilon_start, cfg.epsilon_end, cfg.anneal_steps)


@dataclass
class Transition:
    window: tuple          # L observation arrays ending at o
    action: int
    reward: float
    next_window: tuple     # L observation arrays ending at o'
    done: bool


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling (with replacement).

    Windows are tuples of references to observation arrays, so overlapping
    windows share storage.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def add(self, transition: Transition):
        self._items.append(transition)

    def sample_indices(self, n, rng):
        return rng.integers(0, len(self._items), size=n)

    def sample(self, n, rng):
        if not self._items:
            raise ContractError("cannot sample from an empty replay buffer")
        return [self._items[i] for i in self.sample_indices(n, rng)]


class ObservationWindow:
    """Sliding window of the last L observations.

    At episode start the earliest observation is repeated to fill the window.
    """

    def __init__(self, length):
        self.length = length
        self._frames = deque(maxlen=length)

    def reset(self, obs):
        self._frames.clear()
        self._frames.extend([obs] * self.length)
        return self.frames()

    def push(self, obs):
        self._frames.append(obs)
        return self.frames()

    def frames(self):
        return tuple(self._frames)


def stack_windows(windows):
    return np.stack([np.stack(w) for w in windows])


# ---------------------------------------------------------------- acting


def greedy(q_values):
    """Argmax over the last axis; ties go to the lowest action index."""
    return np.argmax(np.asarray(q_values), axis=-1)


def act(window, params, config: NetConfig, epsilon, rng):
    """Epsilon-greedy action for a single window."""
    if not 0 <= epsilon <= 1:
        raise ContractError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(config.n_actions))
    return int(greedy(q_forward(np.stack(window), params, config).data))


def act_batch(windows, params, config: NetConfig, epsilon, rng):
    """Epsilon-greedy actions for ``[B, L, ...]`` windows in one forward pass."""
    n = len(windows)
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(config.n_actions, size=n)
    q = q_forward(windows, params, config).data
    return np.where(explore, random_actions, greedy(q))


# ---------------------------------------------------------------- TD learning


def compute_targets(batch, target: QNetworkParams, config: NetConfig, gamma):
    """``r`` for terminal transitions, else ``r + gamma * max_a' Q_target(o', a')``."""
    if not batch:
        raise ContractError("compute_targets needs a non-empty batch")
    rewards = np.array([t.reward for t in batch], dtype=float)
    done = np.array([t.done for t in batch], dtype=bool)
    targets = rewards.copy()
    live = ~done
    if live.any():
        nxt = stack_windows([t.next_window for t in batch if not t.done])
        q_next = q_forward(nxt, target, config).data
        targets[live] += gamma * q_next.max(axis=1)
    return targets


def td_loss(batch, params: QNetworkParams, config: NetConfig, targets):
    """Mean squared TD error; ``targets`` are constants."""
    windows = stack_windows([t.window for t in batch])
    actions = np.array([t.action for t in batch], dtype=int)
    q = q_forward(windows, params, config)
    q_taken = q[np.arange(len(batch)), actions]
    err = T.sub(q_taken, Tensor(np.asarray(targets, dtype=float)))
    return T.mean(T.mul(err, err))


class Adam:
    """Bias-corrected Adam over a named parameter map."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def update(self, params: QNetworkParams | dict, grads: dict):
        """``grads`` maps parameter name -> ndarray."""
        tensors = params.tensors if isinstance(params, QNetworkParams) else params
        _check_finite(grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, p in tensors.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ContractError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr=1e-4):
        self.lr = lr
        self.t = 0

    def update(self, params, grads):
        tensors = params.tensors if isinstance(params, QNetworkParams) else params
        _check_finite(grads)
        self.t += 1
        for name, p in tensors.items():
            g = grads.get(name)
            if g is not None:
                p.data -= self.lr * g


def _check_finite(grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")


def make_optimizer(cfg: AgentConfig):
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate)
    return Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)


def optimizer_update(params, grads, optimizer):
    optimizer.update(params, grads)
    return params


def named_grads(params: QNetworkParams | dict, grad_map):
    tensors = params.tensors if isinstance(params, QNetworkParams) else params
    return {name: grad_map.get_grad(t) for name, t in tensors.items()}


class Learner:
    """Owns online/target parameters, the optimiser and the update counter."""

    def __init__(self, cfg: AgentConfig, seed=0, params: QNetworkParams | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg.net, seed)
        self.target = self.params.copy(requires_grad=False)
        self.optimizer = make_optimizer(cfg)
        self.step = 0
        self.sync_steps = []

    def sync_target(self):
        self.target.assign(self.params)
        self.sync_steps.append(self.step)

    def train_step(self, buffer: ReplayBuffer, rng):
        """One minibatch update; returns the loss, or None if the buffer is too small."""
        cfg = self.cfg
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size, rng)
        targets = compute_targets(batch, self.target, cfg.net, cfg.gamma)
        with Tape() as tape:
            loss = td_loss(batch, self.params, cfg.net, targets)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(f"TD loss became non-finite at update {self.step + 1}")
        grads = named_grads(self.params, tape.backward(loss))
        for t in self.params.tensors.values():
            t.grad = None
        try:
            self.optimizer.update(self.params, grads)
        except NumericError as e:
            raise NumericError(f"{e} at update {self.step + 1}") from None
        self.step += 1
        if self.step % cfg.target_sync_every == 0:
            self.sync_target()
        return value


def train_step(buffer, learner: Learner, rng):
    return learner.train_step(buffer, rng)


# ---------------------------------------------------------------- tabular oracle


def tabular_q_update(q, s, a, r, s_next, alpha, gamma, done=False):
    """``Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`` on a copy of ``q``."""
    if not 0 < alpha <= 1:
        raise ContractError("alpha must lie in (0, 1]")
    q = np.array(q, dtype=float)
    bootstrap = 0.0 if done else gamma * q[s_next].max()
    q[s, a] += alpha * (r + bootstrap - q[s, a])
    return q
