"""Voltage regulation on the affine feeder surrogate with the deployed parameter choice."""

import numpy as np

from kkt_tracker import TimeGrid, TrackerParams, build_scenario, kkt_trajectory, run, scenario_config

sc = build_scenario(scenario_config("feeder-surrogate", n=6, T=2000))
p = sc.problem
grid = TimeGrid(p.horizon, 2000)
ref = kkt_trajectory(p, grid, sc.seed_point)

eps = 1e-5
params = TrackerParams(alpha=0.04, eta=0.75 / eps, epsilon=eps)
traj = run(p, grid, params, ref.point(0), reference=ref)

err = traj.error_eta[1:]
speed = ref.step_norms(params.eta)
viol = [np.linalg.norm(np.maximum(p.f(x, t), 0)) for x, t in zip(traj.xs[1:], grid.times()[1:])]
print("mean error      ", err.mean())
print("mean KKT speed  ", speed.mean())
print("corr(err, speed)", np.corrcoef(err, speed)[0, 1])
print("mean violation  ", np.mean(viol))
