"""
Tracking KKT trajectories of time-varying nonconvex problems with a running
regularized primal-dual gradient method, plus the certificates, parameter
tuner and continuous-time checks that go with it.
"""

from kkt_tracker.core import (AllSpace, Ball, Box, CappedDisk, ConvexSet, NonnegOrthant, PrimalDual,
                              Product, eta_dist, eta_norm, normal_cone_residual, project)
from kkt_tracker.exceptions import (BoundNotApplicableError, DivergenceError, DomainError,
                                    InvalidInputError, KKTTrackerError, NoConvergenceError, OracleError,
                                    PreconditionError)
from kkt_tracker.problem import ProblemOracle, SampledProblem, TimeGrid, check_derivatives, sample
from kkt_tracker.scenarios import SCENARIO_NAMES, build_scenario, scenario_config
from kkt_tracker.tracker import TrackerParams, Trajectory, run, step
from kkt_tracker.kkt_oracle import kkt_residual, kkt_trajectory, solve_kkt

__version__ = "0.1.0"
