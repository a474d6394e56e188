"""Spacecraft attitude: a PD baseline next to a critic that runs away.

Run with ``python demos/02_spacecraft_divergence.py``; a few seconds.
"""

import numpy as np

from critic_landscape import adhdp, config, env, metrics

cfg = config.from_dict({"system": "spacecraft", "seed": 0})
task = cfg.task
horizon = int(round(100.0 / task.params.dt))

# A plain PD law settles the 0.1/-0.1/0.05 rad initial error with torques
# well below the 1 N m bound.
pd = lambda x: env.pd_control(x, np.eye(3), 10 * np.eye(3), task.params.torque_bound)  # noqa: E731
ro, cost = metrics.evaluate_policy(pd, task, metrics.PerfConfig(horizon, cfg.perf.gamma))
print(f"PD: max |u| = {np.max(np.abs(ro.controls)):.4f} N m, "
      f"final |theta| = {np.max(np.abs(ro.states[-1, :3])):.2e} rad, normalized cost {cost:.2e}")

# ADHDP with a positive quadratic reward.  The critic output chases
# J(t) = (J(t-1) - r) / gamma, so the weights grow every episode until the
# norm limit stops training.
art = adhdp.train(task, cfg.train, cfg.critic_hidden, cfg.actor_hidden)
norms = np.linalg.norm(art.trajectory.matrix, axis=1)
for k, (n, lg) in enumerate(zip(norms, art.logs), start=1):
    print(f"episode {k:3d}: {len(lg):5d} steps ({lg.status:9s}) critic weight norm {n:.3e}")
print(f"stopped early: {art.stopped_early} ({art.stop_reason})")

policy = metrics.actor_policy(art.final_actor, task)
ro, cost = metrics.evaluate_policy(policy, task, cfg.perf, cfg.eval_state)
fail = "no failure" if ro.t_fail is None else f"failed at step {ro.t_fail}"
print(f"ADHDP frozen policy: normalized cost {cost:.4f} ({fail})")
