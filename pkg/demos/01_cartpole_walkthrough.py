"""Cart-pole from scratch: train, evaluate, and look at the critic landscape.

Run with ``python demos/01_cartpole_walkthrough.py [seed]``; takes about half
a minute on one core.
"""

import sys

import numpy as np

from critic_landscape import adhdp, config, metrics
from critic_landscape import landscape as ls

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

# The cart-pole profile: 6-hidden critic, 4-hidden actor, bang-bang +-10 N,
# 100 trials of at most 5000 steps (100 s at dt = 0.02).
cfg = config.from_dict({"system": "cartpole", "seed": seed})
print(f"training cart-pole, seed {seed}")
art = adhdp.train(cfg.task, cfg.train, cfg.critic_hidden, cfg.actor_hidden)
print("steps survived per trial:", art.survival)

# Freeze the final actor and roll it out from a 1 degree tilt.  The
# normalized cost is 0 for a pole that never moves and 1 for one that falls
# immediately.
policy = metrics.actor_policy(art.final_actor, cfg.task)
ro, cost = metrics.evaluate_policy(policy, cfg.task, cfg.perf, cfg.eval_state)
fail = "no failure" if ro.t_fail is None else f"failed at step {ro.t_fail}"
print(f"frozen policy: normalized cost {cost:.6f} over {cfg.perf.horizon} steps ({fail})")

# The critic's weight path, one vector per trial, spans a plane through its
# two principal directions.  The landscape is the mismatch between a critic
# and the final critic's own TD targets on the last trial.
traj = art.trajectory.matrix
grid = ls.final_landscape(traj, art.logs[-1], art.critic_shape, cfg.train.gamma, n_alpha=41, n_beta=41)
ev = grid.plane.explained_variance
print(f"PCA plane explains {100 * ev[0]:.1f}% + {100 * ev[1]:.1f}% of the weight variance")
print(f"path runs from {np.round(grid.path[0], 3)} to {np.round(grid.path[-1], 3)}; L* = {grid.L_star:.3e}")

surface = metrics.normalize_surface(grid)
idx = metrics.landscape_indices(surface, cfg.indices)
print(f"sharpness {idx.sharpness:.4g}, basin area {idx.basin_area:.4g}, log kappa {idx.log_kappa:.4g}")
