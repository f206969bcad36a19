"""Certificates on the nonconvex keep-out-disk problem: contraction, witness parameters, isolation."""

from kkt_tracker import TimeGrid, build_scenario, kkt_trajectory, scenario_config
from kkt_tracker.certificates import (CertificateInputs, certify, constants, isolation_pair,
                                      witness_parameters)
from kkt_tracker.scenarios import keepout_geometric_kkt

# track a target circling outside a unit disk that x must avoid
sc = build_scenario(scenario_config("keepout-disk", a_amp=0.1, a_freq=0.5))
grid = TimeGrid(1.0, 100)
near = kkt_trajectory(sc.problem, grid, lambda t: keepout_geometric_kkt(sc, t, "near"))

rep = certify(sc.problem, near, CertificateInputs(0.1), alpha=0.05, eta=1.0, epsilon=0.5)
print(rep.to_json())

# witness parameters need Lambda_m > M_lambda M_nc, which holds for a target
# farther from the disk
wsc = build_scenario(scenario_config("keepout-disk", a_offset=(0.7, 0.0), a_amp=0.05))
wref = kkt_trajectory(wsc.problem, grid, lambda t: keepout_geometric_kkt(wsc, t))
const = constants(wsc.problem, wref, CertificateInputs(0.1), eta=1.0)
print("witness parameters:", witness_parameters(const))

# the antipodal KKT point is a local maximizer along the circle, so its
# sufficient-convexity measure is negative and isolation cannot be certified
far = kkt_trajectory(sc.problem, grid, lambda t: keepout_geometric_kkt(sc, t, "far"))
cfar = constants(sc.problem, far, CertificateInputs(0.05), eta=1.0)
cnear = constants(sc.problem, near, CertificateInputs(0.05), eta=1.0)
print("isolation:", isolation_pair(cnear, cfar, near, far, 1.0))

# double-well has two genuine minimizers, and there isolation holds
dw = build_scenario(scenario_config("double-well"))
g = TimeGrid(1.0, 50)
plus = kkt_trajectory(dw.problem, g, lambda t: dw.closed_form(t, "plus"))
minus = kkt_trajectory(dw.problem, g, lambda t: dw.closed_form(t, "minus"))
inp = CertificateInputs(0.3, t_grid_count=5)
print("double-well isolation:", isolation_pair(constants(dw.problem, plus, inp, 0.01),
                                               constants(dw.problem, minus, inp, 0.01), plus, minus, 0.01))
