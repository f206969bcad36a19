"""
Time-varying problem oracles, time sampling and derivative self-checks.

A problem is ``min c(x, t)  s.t.  f_convex(x, t) + f_nonconvex(x, t) <= 0,
x in X(t)`` with smooth callbacks supplied by the user.
"""

from dataclasses import dataclass, field

import numpy as np

from kkt_tracker.core import AllSpace, ConvexSet
from kkt_tracker.exceptions import InvalidInputError, OracleError, PreconditionError

__all__ = ["ProblemOracle", "TimeGrid", "SampledProblem", "sample", "check_derivatives", "fd_step"]


@dataclass(frozen=True)
class TimeGrid:
    """``T`` slots of length ``delta_T = S / T`` covering ``[0, S]``."""

    S: float
    T: int

    def __post_init__(self):
        if not (np.isfinite(self.S) and self.S > 0):
            raise InvalidInputError(f"horizon S must be positive, got {self.S!r}")
        if int(self.T) != self.T or self.T < 0:
            raise InvalidInputError(f"slot count T must be a nonnegative integer, got {self.T!r}")
        object.__setattr__(self, "T", int(self.T))

    @property
    def delta_T(self):
        if self.T == 0:
            raise PreconditionError("an empty grid (T = 0) has no slot length")
        return self.S / self.T

    def time(self, tau):
        """Time of slot ``tau``; slot ``T`` is pinned to ``S`` exactly."""
        if not 0 <= tau <= self.T:
            raise PreconditionError(f"slot index {tau} outside [0, {self.T}]")
        if tau == self.T:
            return float(self.S)
        return tau * self.delta_T

    def times(self):
        return np.array([self.time(k) for k in range(self.T + 1)])


def _zeros_vec(m):
    return lambda x, t: np.zeros(m)


def _zeros_jac(m, n):
    return lambda x, t: np.zeros((m, n))


def _zeros_hess(n):
    return lambda x, t, i: np.zeros((n, n))


@dataclass
class ProblemOracle:
    """
    Callbacks describing a time-varying constrained problem.

    Constraint parts left as ``None`` are identically zero. ``hess_convex_i``
    and ``hess_nonconvex_i`` take ``(x, t, i)`` and return the Hessian of
    component ``i``.
    """

    n: int
    m: int
    horizon: float
    cost: object
    grad_cost: object
    hess_cost: object
    f_convex: object = None
    jac_convex: object = None
    hess_convex_i: object = None
    f_nonconvex: object = None
    jac_nonconvex: object = None
    hess_nonconvex_i: object = None
    feasible_set: ConvexSet = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise InvalidInputError("need n >= 1 and m >= 0")
        n, m = self.n, self.m
        self.has_convex = self.f_convex is not None
        self.has_nonconvex = self.f_nonconvex is not None
        if self.f_convex is None:
            self.f_convex, self.jac_convex, self.hess_convex_i = _zeros_vec(m), _zeros_jac(m, n), _zeros_hess(n)
        if self.f_nonconvex is None:
            self.f_nonconvex, self.jac_nonconvex, self.hess_nonconvex_i = (
                _zeros_vec(m), _zeros_jac(m, n), _zeros_hess(n))
        if self.feasible_set is None:
            self.feasible_set = AllSpace(n)

    # combined views -------------------------------------------------------

    def f(self, x, t):
        if self.m == 0:
            return np.zeros(0)
        if not self.has_nonconvex:
            return np.asarray(self.f_convex(x, t), dtype=float)
        if not self.has_convex:
            return np.asarray(self.f_nonconvex(x, t), dtype=float)
        return np.asarray(self.f_convex(x, t), dtype=float) + self.f_nonconvex(x, t)

    def jac(self, x, t):
        if self.m == 0:
            return np.zeros((0, self.n))
        if not self.has_nonconvex:
            return np.asarray(self.jac_convex(x, t), dtype=float).reshape(self.m, self.n)
        if not self.has_convex:
            return np.asarray(self.jac_nonconvex(x, t), dtype=float).reshape(self.m, self.n)
        return (np.asarray(self.jac_convex(x, t), dtype=float).reshape(self.m, self.n)
                + np.asarray(self.jac_nonconvex(x, t), dtype=float).reshape(self.m, self.n))

    def hess_convex(self, x, t):
        """Stack of convex-part Hessians, shape ``(m, n, n)``."""
        if not self.has_convex or self.m == 0:
            return np.zeros((self.m, self.n, self.n))
        return np.array([self.hess_convex_i(x, t, i) for i in range(self.m)], dtype=float)

    def hess_nonconvex(self, x, t):
        if not self.has_nonconvex or self.m == 0:
            return np.zeros((self.m, self.n, self.n))
        return np.array([self.hess_nonconvex_i(x, t, i) for i in range(self.m)], dtype=float)

    def hess_lagrangian_nc(self, x, lam, t):
        """Hessian in ``x`` of ``c(x, t) + lam^T f_nonconvex(x, t)``."""
        H = np.array(self.hess_cost(x, t), dtype=float).reshape(self.n, self.n)
        if self.has_nonconvex:
            for i in range(self.m):
                if lam[i] != 0.0:
                    H = H + lam[i] * np.asarray(self.hess_nonconvex_i(x, t, i), dtype=float)
        return H

    def project(self, v, t):
        return self.feasible_set.project(v, t)


@dataclass(frozen=True)
class SampledProblem:
    """Frozen-time view of a problem at slot ``tau`` (time ``t``)."""

    problem: ProblemOracle
    t: float
    tau: int = -1

    def cost(self, x):
        return self.problem.cost(x, self.t)

    def grad_cost(self, x):
        return np.asarray(self.problem.grad_cost(x, self.t), dtype=float)

    def f(self, x):
        return self.problem.f(x, self.t)

    def f_convex(self, x):
        return self.problem.f_convex(x, self.t)

    def f_nonconvex(self, x):
        return self.problem.f_nonconvex(x, self.t)

    def jac(self, x):
        return self.problem.jac(x, self.t)

    def hess_cost(self, x):
        return self.problem.hess_cost(x, self.t)

    def project(self, v):
        return self.problem.feasible_set.project(v, self.t)

    @property
    def feasible_set(self):
        return self.problem.feasible_set


def sample(problem, grid, tau):
    """The problem frozen at slot ``tau`` (``1 <= tau <= T``)."""
    if not (isinstance(tau, (int, np.integer)) and 1 <= tau <= grid.T):
        raise PreconditionError(f"slot index must satisfy 1 <= tau <= {grid.T}, got {tau!r}")
    return SampledProblem(problem, grid.time(int(tau)), int(tau))


def fd_step(x):
    """Central-difference step ``eps^(1/3) * (1 + ||x||)``."""
    return np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + float(np.linalg.norm(x)))


def _rel_err(a, ref):
    a = np.asarray(a, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return float(np.linalg.norm(a - ref) / max(np.linalg.norm(ref), 1.0))


def _checked(value, what, x, t):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr.reshape(-1)))
        raise OracleError(f"{what} returned non-finite values at x={x.tolist()}, t={t}, "
                          f"flat components {bad.tolist()}")
    return arr


def _central(fun, x, h):
    """Central-difference Jacobian of ``fun`` (vector or scalar valued) at ``x``."""
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(fun(x + e), dtype=float) - np.asarray(fun(x - e), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1)


def check_derivatives(problem, samples=20, seed=0, x_center=None, x_scale=1.0):
    """
    Compare analytic derivatives with central differences at random points.

    Errors are relative with a unit floor, ``||A - A_fd|| / max(||A_fd||, 1)``,
    maximized over ``samples`` random ``(x, t)`` pairs with ``t`` uniform on
    ``[0, S]`` and ``x`` Gaussian around ``x_center``.

    Returns
    -------
    dict
        Maximal errors keyed by ``gradient`` and ``hess_cost``; when ``m > 0``
        also ``jac_convex``, ``jac_nonconvex``, ``hess_convex`` and
        ``hess_nonconvex``.
    """
    if samples < 1:
        raise PreconditionError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    n, m = problem.n, problem.m
    center = np.zeros(n) if x_center is None else np.asarray(x_center, dtype=float)
    keys = ["gradient", "hess_cost"]
    if m > 0:
        keys += ["jac_convex", "jac_nonconvex", "hess_convex", "hess_nonconvex"]
    report = {k: 0.0 for k in keys}
    for _ in range(samples):
        x = center + x_scale * rng.standard_normal(n)
        t = float(rng.uniform(0.0, problem.horizon))
        h = fd_step(x)
        _checked(problem.cost(x, t), "cost", x, t)
        g = _checked(problem.grad_cost(x, t), "grad_cost", x, t)
        report["gradient"] = max(report["gradient"], _rel_err(g, _central(lambda y: problem.cost(y, t), x, h)))
        H = _checked(problem.hess_cost(x, t), "hess_cost", x, t)
        report["hess_cost"] = max(report["hess_cost"],
                                  _rel_err(H, _central(lambda y: problem.grad_cost(y, t), x, h)))
        if m == 0:
            continue
        for part, f, J, Hi in (("convex", problem.f_convex, problem.jac_convex, problem.hess_convex_i),
                               ("nonconvex", problem.f_nonconvex, problem.jac_nonconvex,
                                problem.hess_nonconvex_i)):
            _checked(f(x, t), f"f_{part}", x, t)
            Ja = _checked(J(x, t), f"jac_{part}", x, t).reshape(m, n)
            report[f"jac_{part}"] = max(report[f"jac_{part}"],
                                        _rel_err(Ja, _central(lambda y: f(y, t), x, h)))
            Jfd = _central(lambda y: np.asarray(J(y, t), dtype=float).reshape(m, n), x, h)
            for i in range(m):
                Hia = _checked(Hi(x, t, i), f"hess_{part}_i[{i}]", x, t)
                report[f"hess_{part}"] = max(report[f"hess_{part}"], _rel_err(Hia, Jfd[i]))
    return report
