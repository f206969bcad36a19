"""Pick (eta, epsilon) by minimizing the continuous-time eventual bound."""

import math

import numpy as np

from kkt_tracker.tuner import TunerProblem, b_of_eps, tune, unimodality_audit

# primal speed 1, multiplier speed 1/2, so sigma_eta = sqrt(1 + 1/(4 eta))
tp = TunerProblem(delta=0.5, beta=10.0, Lambda_m=1.0, M_nc=0.5, M_lambda=0.2,
                  sigma_of_eta=lambda eta: math.sqrt(1.0 + 0.25 / eta))
res = tune(tp)
print(res.as_dict())

for eps in np.geomspace(2 * tp.eps_lower, 10, 8):
    print(f"eps={eps:9.5f}  b={b_of_eps(tp, eps):.5f}")
print(unimodality_audit(tp, tp.eps_lower, 100 * tp.eps_lower))
