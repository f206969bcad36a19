"""Track a drifting scalar quadratic with a hard cap and compare with the certified per-step bound."""

import numpy as np

from kkt_tracker import PrimalDual, TimeGrid, TrackerParams, build_scenario, eta_dist, kkt_trajectory, run, scenario_config
from kkt_tracker.certificates import CertificateInputs, bounds_discrete, constants, rho_kappa, search_parameters

# cost (x - t)^2 / 2, constraint x <= 1/2: the cap activates halfway through
sc = build_scenario(scenario_config("quadratic-tracking"))
grid = TimeGrid(1.0, 1000)
ref = kkt_trajectory(sc.problem, grid, sc.closed_form)

# sampled constants on a delta-tube of radius 1
const = constants(sc.problem, ref, CertificateInputs(1.0, t_grid_count=9), eta=1.0)
print("Lambda_m", const.Lambda_m, "M_nc", const.M_nc, "sigma_eta", const.sigma_eta)

best = search_parameters(const, np.geomspace(0.01, 0.5, 12), [0.5, 1.0, 2.0], [0.25, 0.5, 1.0])
alpha, eta, eps = best["alpha"], best["eta"], best["epsilon"]
c = const.at_eta(eta)
rho_P, rho, kappa = rho_kappa(c, alpha, eta, eps)
print(f"alpha={alpha:.3g} eta={eta} eps={eps}  rho={rho:.4f} kappa={kappa:.4f}")

z0 = PrimalDual([0.3], [0.2])
traj = run(sc.problem, grid, TrackerParams(alpha, eta, eps), z0, reference=ref)
z1 = ref.point(1)
e0 = eta_dist(z0.x - z1.x, z0.lam - z1.lam, eta)
bound, eventual = bounds_discrete(rho, kappa, c.delta, alpha, eta, eps, c.sigma_eta, grid.delta_T, c.M_lambda,
                                  e0, np.arange(1, grid.T + 1))

for tau in (1, 10, 100, 500, 1000):
    print(f"tau={tau:5d}  error={traj.error_eta[tau]:.4f}  bound={bound[tau - 1]:.4f}")
print("eventual bound", eventual, " worst slack", np.min(bound - traj.error_eta[1:]))
