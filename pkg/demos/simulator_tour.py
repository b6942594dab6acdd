"""A walk through the 2-D simulator: worlds, depth scans, rewards, noise.

Run:  python3 demos/simulator_tour.py
"""
import numpy as np

from darqn.env import Action, EnvConfig, NavEnv, NoiseConfig, builtin_worlds, get_world

print("shipped worlds:", ", ".join(builtin_worlds()))

# Drop the drone into the scattered-obstacle room.  reset() takes a seed, so
# the spawn pose (and the movers' initial headings) are reproducible.
env = NavEnv(get_world("room-scattered"))
state, obs = env.reset(seed=0)
print(f"\nspawned at x={state.x:.2f} y={state.y:.2f} heading={np.degrees(state.heading):.0f} deg")

# The observation is one depth value per ray across a 90 degree field of view,
# leftmost ray first.  Materials come along for the pseudo-RGB renderer.
np.set_printoptions(precision=2, suppress=True, linewidth=110)
print("depth scan (m):", obs.depth)

# Reward is distance-shaped: 0 at the drone's radius, 1 at 1.5 m and beyond,
# +0.5 for going straight and -10 on a collision.
for action in (Action.GO_STRAIGHT, Action.TURN_LEFT, Action.TURN_LEFT, Action.GO_STRAIGHT):
    res = env.step(action)
    print(f"{action.name:<12} nearest obstacle {res.info['distance']:.2f} m  reward {res.reward:+.3f}")

# Keep going straight until something gets in the way.
steps = 4
while not res.done:
    res = env.step(Action.GO_STRAIGHT)
    steps += 1
print(f"\nstraight-line flight ended after {steps} steps, collision={res.info['collision']}")

# Same pose, degraded sensor: blur, jitter and block replacement.
noisy = NavEnv(get_world("room-scattered"), EnvConfig(noise=NoiseConfig(enabled=True)))
_, clean = NavEnv(get_world("room-scattered")).reset(seed=0)
_, degraded = noisy.reset(seed=0)
print("\nclean  :", clean.depth[:12])
print("noisy  :", degraded.depth[:12])

# The GAN's training pairs come from here: a pseudo-RGB image and the clean
# depth image it should be translated into.
env = NavEnv(get_world("cafe-movers"))
env.reset(seed=3)
x, y = env.render_pseudo_rgb()
print(f"\npseudo-RGB {x.shape}, depth {y.shape}, depth range {y.min():.2f}..{y.max():.2f} (fraction of d_max)")
