"""Temporal attention, one piece at a time.

A DRQN_TA network encodes each of the last L depth scans, runs an LSTM over
the first L-1 of them, scores every frame against the LSTM state, and feeds
the attention-weighted mix of frame features to the Q head.  This script
pulls those pieces apart on a freshly initialised network.

Run:  python3 demos/attention_by_hand.py
"""
import numpy as np

from darqn import nn
from darqn.env import NavEnv, get_world
from darqn.nn import LstmState, NetConfig
from darqn.tensor import Tensor

cfg = NetConfig(variant="drqn_ta", window_len=6)
params = nn.init_params(cfg, seed=0)

# Six consecutive scans taken while turning left.
env = NavEnv(get_world("maze-narrow"))
_, obs = env.reset(seed=4)
frames = [obs.normalized(env.config.d_max)]
for _ in range(cfg.window_len - 1):
    frames.append(env.step(1).observation.normalized(env.config.d_max))
window = np.stack(frames)                       # [L, rays]

# 1. one feature vector per frame
feats = nn.encode(window, params, cfg)          # [L, m]
print("frame features:", feats.shape)

# 2. LSTM over frames 1..L-1, starting from zeros
state = LstmState.zeros(1, cfg.hidden_size)
for v in feats.data[:-1]:
    state = nn.lstm_step(state, Tensor(v[None]), params)

# 3. score all L frames against that state, normalise, mix
logits = nn.attention_scores(state.h, Tensor(feats.data[None]), params)
weights = nn.attention_weights(logits)
context = nn.context_vector(weights, Tensor(feats.data[None]))
np.set_printoptions(precision=4, suppress=True)
print("attention weights (oldest first):", weights.data[0], " sum =", weights.data.sum())

# 4. the Q head on the context, and the same thing through q_forward
q_manual = nn.q_head(context, params).data[0]
q_net, attn = nn.q_forward(window, params, cfg, return_attention=True)
print("Q by hand :", q_manual)
print("q_forward :", q_net.data, " max diff", np.abs(q_manual - q_net.data).max())

# With one-hot weights the context is exactly the chosen frame's features.
pick = np.eye(cfg.window_len)[2]
ctx = nn.context_vector(Tensor(pick), feats).data
print("one-hot context equals frame 2 features:", np.array_equal(ctx, feats.data[2]))
