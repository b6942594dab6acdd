"""Q-network layers: conv encoder, LSTM cell, temporal attention, Q head.

Three variants share the encoder and head:

* ``dqn``      - Q from the features of the most recent observation only.
* ``drqn``     - LSTM over the window, Q from the final hidden state.
* ``drqn_ta``  - LSTM hidden state ``h_{t-1}`` scores every feature vector in
  the window; Q from the softmax-weighted sum of those feature vectors.

All batched entry points take ``[B, ...]`` arrays; single-sample calls are
accepted and return unbatched results.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

VARIANTS = ("dqn", "drqn", "drqn_ta")


@dataclass
class NetConfig:
    variant: str = "drqn_ta"
    # observation shape: (rays,) for the desk-scale default, (H, W) for image mode
    input_shape: tuple = (32,)
    window_len: int = 10
    encoder: str = "conv"            # "conv" or "dense"
    filters: tuple = (8, 16, 16)
    kernel_sizes: tuple = (8, 4, 3)
    strides: tuple = (2, 2, 1)
    feature_size: int = 32           # m
    hidden_size: int = 32            # r
    attention_size: int = 16         # a
    head_hidden: int = 32
    n_actions: int = 3

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in np.atleast_1d(self.input_shape))
        self.filters = tuple(self.filters)
        self.kernel_sizes = tuple(self.kernel_sizes)
        self.strides = tuple(self.strides)
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown network variant {self.variant!r}; expected one of {VARIANTS}")
        if self.encoder not in ("conv", "dense"):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if len(self.input_shape) not in (1, 2):
            raise ConfigError(f"input_shape must be (rays,) or (H, W), got {self.input_shape}")
        if not (len(self.filters) == len(self.kernel_sizes) == len(self.strides)):
            raise ConfigError("filters, kernel_sizes and strides must have equal length")
        for name in ("window_len", "feature_size", "hidden_size", "attention_size", "head_hidden", "n_actions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.encoder == "conv":
            self.conv_output_shape()

    def conv_output_shape(self):
        """(channels, H, W) after the conv stack; raises if a kernel does not fit."""
        if len(self.input_shape) == 1:
            h, w = 1, self.input_shape[0]
        else:
            h, w = self.input_shape
        c = 1
        for f, k, s in zip(self.filters, self.kernel_sizes, self.strides):
            kh = 1 if len(self.input_shape) == 1 else k
            if k > w or kh > h:
                raise ConfigError(f"conv kernel {k} does not fit feature map {h}x{w}; adjust strides/kernels")
            h, w, c = (h - kh) // s + 1, (w - k) // s + 1, f
        return c, h, w

    @property
    def recurrent(self):
        return self.variant != "dqn"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch, size):
        return cls(Tensor(np.zeros((batch, size))), Tensor(np.zeros((batch, size))))


@dataclass
class QNetworkParams:
    variant: str
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def names(self):
        return list(self.tensors)

    def copy(self, requires_grad=True):
        return QNetworkParams(self.variant, {k: Tensor(v.data.copy(), requires_grad)
                                             for k, v in self.tensors.items()})

    def assign(self, other):
        for k, v in other.tensors.items():
            self.tensors[k].data[...] = v.data

    def group(self, prefix):
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix)}


# ---------------------------------------------------------------- init


def xavier_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: NetConfig, seed) -> QNetworkParams:
    """Xavier-uniform weights, zero biases, LSTM forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    p = {}

    def leaf(name, arr):
        p[name] = Tensor(arr, requires_grad=True)

    image = len(config.input_shape) == 2
    if config.encoder == "conv":
        c = 1
        for i, (f, k) in enumerate(zip(config.filters, config.kernel_sizes)):
            kh = k if image else 1
            leaf(f"enc.conv{i}.w", xavier_uniform(rng, (f, c, kh, k), c * kh * k, f * kh * k))
            leaf(f"enc.conv{i}.b", np.zeros(f))
            c = f
        flat = int(np.prod(config.conv_output_shape()))
    else:
        flat = int(np.prod(config.input_shape))
    m, r, a = config.feature_size, config.hidden_size, config.attention_size
    leaf("enc.fc.w", xavier_uniform(rng, (flat, m), flat, m))
    leaf("enc.fc.b", np.zeros(m))
    if config.recurrent:
        leaf("lstm.w", xavier_uniform(rng, (m + r, 4 * r), m + r, 4 * r))
        b = np.zeros(4 * r)
        b[r:2 * r] = 1.0
        leaf("lstm.b", b)
    if config.variant == "drqn_ta":
        leaf("att.w", xavier_uniform(rng, (a,), a, 1))
        leaf("att.W_a", xavier_uniform(rng, (a, r), r, a))
        leaf("att.U_a", xavier_uniform(rng, (a, m), m, a))
        leaf("att.b_a", np.zeros(a))
    head_in = r if config.variant == "drqn" else m
    leaf("head.fc.w", xavier_uniform(rng, (head_in, config.head_hidden), head_in, config.head_hidden))
    leaf("head.fc.b", np.zeros(config.head_hidden))
    leaf("head.out.w", xavier_uniform(rng, (config.head_hidden, config.n_actions),
                                      config.head_hidden, config.n_actions))
    leaf("head.out.b", np.zeros(config.n_actions))
    return QNetworkParams(config.variant, p)


# ---------------------------------------------------------------- layers


def encode(observations, params, config: NetConfig):
    """Map observations ``[N, *input_shape]`` to features ``[N, m]``."""
    obs = observations.data if isinstance(observations, Tensor) else np.asarray(observations, dtype=float)
    single = obs.shape == config.input_shape
    if single:
        obs = obs[None]
    if obs.shape[1:] != config.input_shape:
        raise DimensionError(f"observation shape {obs.shape[1:]} does not match configured {config.input_shape}")
    n = obs.shape[0]
    if config.encoder == "conv":
        x = Tensor(obs.reshape(n, 1, 1, -1) if obs.ndim == 2 else obs[:, None])
        for i, s in enumerate(config.strides):
            w, b = params[f"enc.conv{i}.w"], params[f"enc.conv{i}.b"]
            x = T.relu(T.add(T.conv2d(x, w, s), T.reshape(b, (1, -1, 1, 1))))
        x = T.reshape(x, (n, -1))
    else:
        x = Tensor(obs.reshape(n, -1))
    v = T.relu(T.add(T.matmul(x, params["enc.fc.w"]), params["enc.fc.b"]))
    return T.reshape(v, (v.shape[1],)) if single else v


def lstm_step(state: LstmState, v, params):
    """One LSTM cell update.

    Pre-activation layout along the last axis is (input, forget, output,
    candidate); the three gates share one sigmoid.
    """
    h, c = state.h, state.c
    if v.ndim != h.ndim:
        raise DimensionError(f"lstm_step: input {v.shape} and hidden {h.shape} disagree in batching")
    z = T.add(T.matmul(T.concat([v, h], axis=-1), params["lstm.w"]), params["lstm.b"])
    return _lstm_gates(z, c)


def _lstm_gates(z, c):
    r = c.shape[-1]
    gates = T.sigmoid(z[..., 0:3 * r])
    i = gates[..., 0:r]
    f = gates[..., r:2 * r]
    o = gates[..., 2 * r:3 * r]
    g = T.tanh(z[..., 3 * r:4 * r])
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return LstmState(h_new, c_new)


def attention_scores(h_prev, features, params):
    """Logits ``w . tanh(W_a h + U_a v_i + b_a)`` for each of the L features.

    ``h_prev``: ``[B, r]`` (or ``[r]``); ``features``: ``[B, L, m]`` (or ``[L, m]``).
    Returns ``[B, L]`` (or ``[L]``).  A list of per-frame feature tensors is
    also accepted.
    """
    if isinstance(features, (list, tuple)):
        if not features:
            raise ContractError("attention needs at least one feature vector")
        features = T.stack(features, axis=-2)
    if features.ndim < 2 or features.shape[-2] == 0:
        raise ContractError("attention needs at least one feature vector")
    single = features.ndim == 2
    if single:
        features = T.reshape(features, (1,) + features.shape)
        h_prev = T.reshape(h_prev, (1, -1))
    B, L, m = features.shape
    wh = T.matmul(h_prev, T.transpose(params["att.W_a"]))                 # [B, a]
    uv = T.matmul(T.reshape(features, (B * L, m)), T.transpose(params["att.U_a"]))
    uv = T.reshape(uv, (B, L, -1))                                         # [B, L, a]
    pre = T.add(T.add(uv, T.reshape(wh, (B, 1, -1))), params["att.b_a"])
    e = T.matmul(T.tanh(pre), T.reshape(params["att.w"], (-1, 1)))        # [B, L, 1]
    e = T.reshape(e, (B, L))
    return T.reshape(e, (L,)) if single else e


def attention_weights(logits):
    return T.softmax(logits, axis=-1)


def context_vector(weights, features):
    """Weighted sum of feature vectors: ``sum_j a_j v_j``."""
    if weights.shape != features.shape[:-1]:
        raise DimensionError(f"context_vector: weights {weights.shape} vs features {features.shape}")
    return T.sum(T.mul(T.reshape(weights, weights.shape + (1,)), features), axis=-2)


def q_head(context, params):
    hidden = T.relu(T.add(T.matmul(context, params["head.fc.w"]), params["head.fc.b"]))
    return T.add(T.matmul(hidden, params["head.out.w"]), params["head.out.b"])


def q_forward(windows, params, config: NetConfig, return_attention=False):
    """Q-values for observation windows.

    ``windows`` is ``[B, L, *input_shape]`` or a single ``[L, *input_shape]``.
    Returns a Tensor ``[B, n_actions]`` (or ``[n_actions]``); with
    ``return_attention`` also the normalized weights (None unless drqn_ta).
    """
    w = np.asarray(windows, dtype=float)
    nd = len(config.input_shape)
    single = w.ndim == nd + 1
    if single:
        w = w[None]
    if w.ndim != nd + 2 or w.shape[2:] != config.input_shape:
        raise DimensionError(f"window shape {w.shape} incompatible with input {config.input_shape}")
    B, L = w.shape[:2]
    attn = None
    if config.variant == "dqn":
        if L < 1:
            raise ContractError("window must contain at least one observation")
        q = q_head(encode(w[:, -1], params, config), params)
    else:
        if L != config.window_len:
            raise ContractError(f"recurrent variants need a window of exactly {config.window_len}, got {L}")
        feats = encode(w.reshape((B * L,) + config.input_shape), params, config)
        feats = T.reshape(feats, (B, L, -1))
        state = LstmState.zeros(B, config.hidden_size)
        steps = L if config.variant == "drqn" else L - 1
        if steps:
            # same arithmetic as lstm_step, with the input projection of all
            # steps done in one product: [v, h] W = v W_x + h W_h
            m = config.feature_size
            w = params["lstm.w"]
            w_x, w_h = w[:m], w[m:]
            zx = T.add(T.matmul(feats, w_x), params["lstm.b"])      # [B, L, 4r]
            for t in range(steps):
                state = _lstm_gates(T.add(zx[:, t], T.matmul(state.h, w_h)), state.c)
        if config.variant == "drqn":
            q = q_head(state.h, params)
        else:
            attn = attention_weights(attention_scores(state.h, feats, params))
            q = q_head(context_vector(attn, feats), params)
    if single:
        q = T.reshape(q, (q.shape[-1],))
        if attn is not None:
            attn = T.reshape(attn, (L,))
    return (q, attn) if return_attention else q


# ---------------------------------------------------------------- checkpoints

MAGIC = b"DARQNCK1"
FORMAT_VERSION = 1


def write_records(path, records, meta):
    """Versioned container: header, JSON metadata, then (name, shape, <f8 data) records."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(records))]
    for name, arr in records:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_records(path):
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ConfigError(f"{path}: not a darqn container")
    version, mlen = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported container version {version}")
    off = 16
    meta = json.loads(buf[off:off + mlen])
    off += mlen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    records = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
        records.append((name, arr))
    return records, meta


def save_checkpoint(path, params: QNetworkParams, config: NetConfig, extra=None):
    meta = {"kind": "qnetwork", "net": config.to_dict(), "extra": extra or {}}
    write_records(path, [(k, v.data) for k, v in params], meta)


def load_checkpoint(path):
    """Returns ``(params, net_config, extra)``."""
    records, meta = read_records(path)
    if meta.get("kind") != "qnetwork":
        raise ConfigError(f"{path}: not a Q-network checkpoint")
    config = NetConfig.from_dict(meta["net"])
    params = QNetworkParams(config.variant, {k: Tensor(v, requires_grad=True) for k, v in records})
    return params, config, meta.get("extra", {})
