"""
The running regularized primal-dual gradient iteration.

One update per time slot::

    x+ = P_X[x - alpha (grad c(x) + J(x)^T lam)]
    l+ = P_+[lam + eta alpha (f(x) - epsilon (lam - lambda_prior))]

Both updates read the previous iterate (Jacobi style).
"""

from dataclasses import dataclass, field

import numpy as np

from kkt_tracker.core import PrimalDual, eta_dist
from kkt_tracker.exceptions import DivergenceError, InvalidInputError
from kkt_tracker.problem import SampledProblem, TimeGrid

__all__ = ["TrackerParams", "Trajectory", "step", "run", "DIVERGENCE_NORM"]

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class TrackerParams:
    """
    Step sizes of the iteration.

    Parameters
    ----------
    alpha : float
        Primal step.
    eta : float
        Ratio of dual to primal step.
    epsilon : float
        Dual regularization weight; ``eta * alpha * epsilon`` must lie in ``(0, 1)``.
    lambda_prior : array_like, optional
        Prior multiplier estimate, zero when omitted.
    beta : float, optional
        Continuous-time rate; recorded only (``alpha = delta_T * beta``).
    """

    alpha: float
    eta: float
    epsilon: float
    lambda_prior: object = None
    beta: object = None

    def __post_init__(self):
        for name in ("alpha", "eta", "epsilon"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.beta is not None and not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError(f"beta must be positive, got {self.beta!r}")
        if not self.eta * self.alpha * self.epsilon < 1.0:
            raise InvalidInputError(
                f"eta*alpha*epsilon = {self.eta * self.alpha * self.epsilon!r} must be below 1")
        if self.lambda_prior is not None:
            lp = np.asarray(self.lambda_prior, dtype=float).reshape(-1)
            if np.any(lp < 0) or not np.all(np.isfinite(lp)):
                raise InvalidInputError("lambda_prior must be finite and nonnegative")
            object.__setattr__(self, "lambda_prior", lp)

    @property
    def contraction_factor(self):
        """``1 - eta alpha epsilon``."""
        return 1.0 - self.eta * self.alpha * self.epsilon

    def prior(self, m):
        if self.lambda_prior is None:
            return np.zeros(m)
        if self.lambda_prior.size != m:
            raise InvalidInputError(f"lambda_prior has length {self.lambda_prior.size}, expected {m}")
        return self.lambda_prior


@dataclass
class Trajectory:
    """
    Iterates on a time grid; row ``k`` of ``xs``/``lams`` is slot ``k``.

    Optional per-slot arrays (length ``T + 1``, NaN where undefined) hold the
    eta-distance to a reference, KKT residuals and bound values.
    """

    grid: TimeGrid
    xs: np.ndarray
    lams: np.ndarray
    error_eta: object = None
    kkt_residual: object = None
    bound: object = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.lams = np.asarray(self.lams, dtype=float).reshape(self.xs.shape[0], -1)
        if self.xs.shape[0] != self.grid.T + 1:
            raise InvalidInputError(f"trajectory has {self.xs.shape[0]} points, grid needs {self.grid.T + 1}")

    def __len__(self):
        return self.xs.shape[0]

    @property
    def n(self):
        return self.xs.shape[1]

    @property
    def m(self):
        return self.lams.shape[1]

    def point(self, tau):
        return PrimalDual(self.xs[tau], self.lams[tau])

    @property
    def points(self):
        return [self.point(k) for k in range(len(self))]

    def times(self):
        return self.grid.times()

    def step_norms(self, eta):
        """``||z_k - z_{k-1}||_eta`` for ``k = 1..T``."""
        dx = np.diff(self.xs, axis=0)
        dl = np.diff(self.lams, axis=0)
        return np.sqrt(np.sum(dx * dx, axis=1) + np.sum(dl * dl, axis=1) / eta)

    def distance_to(self, other, eta):
        """Per-slot eta-distance to another trajectory on the same grid."""
        dx = self.xs - other.xs
        dl = self.lams - other.lams
        return np.sqrt(np.sum(dx * dx, axis=1) + np.sum(dl * dl, axis=1) / eta)


def _first_bad(arr):
    return int(np.flatnonzero(~np.isfinite(np.asarray(arr).reshape(-1)))[0])


def raw_step(x, lam, view, alpha, eta, epsilon, prior):
    """Array-level update without input validation; used by the KKT solver too."""
    g = np.asarray(view.grad_cost(x), dtype=float)
    J = view.jac(x)
    fx = view.f(x)
    for name, arr in (("grad_cost", g), ("jacobian", J), ("constraint", fx)):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite {name} component {_first_bad(arr)}", component=name)
    x_new = view.project(x - alpha * (g + J.T @ lam))
    lam_new = np.maximum(lam + eta * alpha * (fx - epsilon * (lam - prior)), 0.0)
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError(f"non-finite primal component x[{_first_bad(x_new)}]", component="x")
    if not np.all(np.isfinite(lam_new)):
        raise DivergenceError(f"non-finite dual component lambda[{_first_bad(lam_new)}]", component="lambda")
    return x_new, lam_new


def step(z_prev, view, params):
    """
    One regularized primal-dual update at a frozen-time view.

    Parameters
    ----------
    z_prev : PrimalDual
    view : SampledProblem
    params : TrackerParams

    Returns
    -------
    PrimalDual
    """
    prob = view.problem
    if z_prev.n != prob.n or z_prev.m != prob.m:
        raise InvalidInputError(f"point has dimensions ({z_prev.n}, {z_prev.m}), problem ({prob.n}, {prob.m})")
    x, lam = raw_step(z_prev.x, z_prev.lam, view, params.alpha, params.eta, params.epsilon,
                      params.prior(prob.m))
    return PrimalDual(x, lam)


def _reference_point(reference, tau, t):
    if reference is None:
        return None
    if isinstance(reference, Trajectory):
        return reference.xs[tau], reference.lams[tau]
    z = reference(t)
    return z.x, z.lam


def run(problem, grid, params, z0, reference=None, residual=False, bound=None):
    """
    Run the iteration for ``tau = 1..T``.

    Parameters
    ----------
    problem : ProblemOracle
    grid : TimeGrid
    params : TrackerParams
    z0 : PrimalDual
        Initial point; projected onto ``X(0) x R^m_+`` when infeasible, with
        ``flags['projected_initial_point']`` set.
    reference : Trajectory or callable, optional
        KKT trajectory (or ``t -> PrimalDual``); enables ``error_eta``.
    residual : bool
        Record the KKT residual of every iterate (unit check steps).
    bound : callable, optional
        ``tau -> value`` stored in ``Trajectory.bound``.

    Returns
    -------
    Trajectory
    """
    if z0.n != problem.n or z0.m != problem.m:
        raise InvalidInputError("initial point dimensions do not match the problem")
    T = grid.T
    flags = {}
    x0 = z0.x
    if not problem.feasible_set.contains(x0, 0.0):
        x0 = problem.project(x0, 0.0)
        flags["projected_initial_point"] = True
    xs = np.empty((T + 1, problem.n))
    lams = np.empty((T + 1, problem.m))
    xs[0], lams[0] = x0, z0.lam
    prior = params.prior(problem.m)
    err = np.full(T + 1, np.nan) if reference is not None else None
    res = np.full(T + 1, np.nan) if residual else None
    bnd = np.full(T + 1, np.nan) if bound is not None else None
    if residual or reference is not None or bound is not None:
        from kkt_tracker.kkt_oracle import kkt_residual_arrays
    else:
        kkt_residual_arrays = None

    def record(k, t):
        ref = _reference_point(reference, k, t)
        if ref is not None:
            err[k] = eta_dist(xs[k] - ref[0], lams[k] - ref[1], params.eta)
        if residual:
            res[k] = kkt_residual_arrays(xs[k], lams[k], problem, t, 1.0, 1.0)
        if bound is not None:
            bnd[k] = bound(k)

    record(0, 0.0)
    x, lam = xs[0], lams[0]
    for tau in range(1, T + 1):
        t = grid.time(tau)
        view = SampledProblem(problem, t, tau)
        try:
            x, lam = raw_step(x, lam, view, params.alpha, params.eta, params.epsilon, prior)
        except DivergenceError as exc:
            raise DivergenceError(f"slot {tau}: {exc}", tau=tau, component=exc.component) from exc
        size = float(np.sqrt(x @ x + lam @ lam))
        if size > DIVERGENCE_NORM:
            raise DivergenceError(f"slot {tau}: iterate norm {size:.3e} exceeds {DIVERGENCE_NORM:.0e}",
                                  tau=tau, component="norm")
        xs[tau], lams[tau] = x, lam
        record(tau, t)
    return Trajectory(grid, xs, lams, error_eta=err, kkt_residual=res, bound=bnd, flags=flags)

