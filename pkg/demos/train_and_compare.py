"""Train DQN and DRQN_TA on the same world, then race them against the baselines.

The default budget (20k environment steps each) takes a few minutes on one
core and is enough to see the learned policies pull away from random and
straight flight.  Outputs land in --out: training logs, per-episode eval
CSVs, and a learning-curve SVG.

Run:  python3 demos/train_and_compare.py --steps 20000 --world room-scattered
"""
import argparse
from pathlib import Path

from darqn.agent import AgentConfig
from darqn.env import EnvConfig
from darqn.nn import NetConfig
from darqn.plotting import plot_learning_curves
from darqn.runner import BASELINES, GreedyPolicy, Stage, TrainConfig, evaluate, train

ap = argparse.ArgumentParser()
ap.add_argument("--world", default="room-scattered")
ap.add_argument("--steps", type=int, default=20_000)
ap.add_argument("--episodes", type=int, default=100)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--out", default="runs/demo-compare")
args = ap.parse_args()
out = Path(args.out)

env = EnvConfig()
logs = []
for variant in ("dqn", "drqn_ta"):
    # One gradient update every four steps keeps the recurrent model affordable.
    agent = AgentConfig(train_every=4, anneal_steps=args.steps // 2,
                        net=NetConfig(variant=variant, input_shape=env.observation_shape))
    cfg = TrainConfig(stages=[Stage(args.world, args.steps)], agent=agent, env=env, seed=args.seed,
                      checkpoint_every=args.steps)
    print(f"training {variant} for {args.steps} steps ...", flush=True)
    result = train(cfg, out / variant)
    logs.append(out / variant / "train_log.csv")
    report = evaluate(GreedyPolicy(result.learner.params, agent.net), args.world, args.episodes, args.seed + 1, env)
    report.write(out, f"eval_{variant}")
    print(report.summary())

for name, policy in BASELINES.items():
    report = evaluate(policy(), args.world, args.episodes, args.seed + 1, env)
    report.write(out, f"eval_{name}")
    print(name, report.summary())

plot_learning_curves(logs, out / "learning_curves.svg", ["DQN", "DRQN_TA"])
print("wrote", out / "learning_curves.svg")
