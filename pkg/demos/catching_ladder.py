"""Refine the catching scheme and watch it converge to the continuous-time flow."""

import numpy as np

from kkt_tracker import PrimalDual, build_scenario, scenario_config
from kkt_tracker.catching import observed_orders, refine_run, refinement_ladder, sweeping_example

# cost (x - b(t))^2 / 2 with b(t) = 1/2 + t; the cap sits far away at x <= 10
sc = build_scenario(scenario_config("quadratic-tracking", b_offset=0.5, g_offset=10.0))
beta, z0 = 5.0, PrimalDual([0.0], [0.0])


def flow(t):
    return PrimalDual([0.5 + t - 0.2 - 0.3 * np.exp(-beta * t)], [0.0])


rows = refinement_ladder(sc.problem, z0, beta, 1.0, 1.0, Ts=(250, 500, 1000, 2000, 4000), exact=flow)
for r in rows:
    print(r)
print("gap orders", observed_orders([r["gap"] for r in rows]))

path = refine_run(sc.problem, z0, beta, 1.0, 1.0, T=10_000)
t = np.linspace(0, 1, 5)
print("path", path.stacked_at(t)[:, 0])
print("flow", [flow(s).x[0] for s in t])

# x >= t with no drift: catching pushes x along the moving boundary
sw = refine_run(sweeping_example(), PrimalDual([0.0, 0.0], []), 1.0, 1.0, 1.0, T=10)
print(np.column_stack([sw.times, sw.xs]))
