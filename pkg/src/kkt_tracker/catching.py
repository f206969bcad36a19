"""
Continuous-time limit of the tracker.

With ``alpha = delta_T * beta`` the tracker is the catching scheme of the
perturbed sweeping process

    -dz/dt + Phi(z, t) in N_{C(t)}(z),
    Phi = beta * (-grad c - J^T lam, eta (f - eps (lam - lambda_prior))),
    C(t) = X(t) x R^m_+.

Paths are the piecewise-linear interpolants of the iterates. Convergence is
checked Cauchy style through refinement gaps, and consistency through the
inclusion residual at segment midpoints.
"""

import csv
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from kkt_tracker.core import Box, PrimalDual
from kkt_tracker.exceptions import DivergenceError, InvalidInputError, PreconditionError
from kkt_tracker.problem import ProblemOracle, TimeGrid
from kkt_tracker.tracker import TrackerParams, run

__all__ = [
    "PiecewiseLinearPath",
    "refine_run",
    "refinement_gap",
    "inclusion_residual",
    "drift",
    "refinement_ladder",
    "observed_orders",
    "write_path_csv",
    "write_ladder_csv",
    "sweeping_example",
]


class PiecewiseLinearPath:
    """Linear interpolation of primal-dual iterates on ``times``."""

    def __init__(self, times, xs, lams):
        self.times = np.asarray(times, dtype=float)
        self.xs = np.asarray(xs, dtype=float)
        self.lams = np.asarray(lams, dtype=float).reshape(self.xs.shape[0], -1)
        if self.times.size != self.xs.shape[0] or self.times.size < 2:
            raise InvalidInputError("a path needs at least two nodes with matching data")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("path times must increase")

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.times(), traj.xs, traj.lams)

    @property
    def n(self):
        return self.xs.shape[1]

    @property
    def m(self):
        return self.lams.shape[1]

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def stacked_at(self, t):
        """Stacked ``(x, lam)`` rows at the query times (array-valued ``t`` allowed)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.span
        if np.any(t < lo - 1e-12 * (1 + abs(lo))) or np.any(t > hi + 1e-12 * (1 + abs(hi))):
            raise PreconditionError(f"query time outside [{lo}, {hi}]")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        s = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)[:, None]
        Z = np.hstack([self.xs, self.lams])
        out = Z[k] + s * (Z[k + 1] - Z[k])
        # keep the nodes exact
        return np.where(s == 1.0, Z[k + 1], out)

    def __call__(self, t):
        z = self.stacked_at(t)[0]
        return PrimalDual(z[:self.n], np.maximum(z[self.n:], 0.0))

    def slopes(self):
        Z = np.hstack([self.xs, self.lams])
        return np.diff(Z, axis=0) / np.diff(self.times)[:, None]


def refine_run(problem, z0, beta, eta, epsilon, lambda_prior=None, T=1000):
    """
    Tracker with ``alpha = (S / T) beta`` on ``T`` slots, as an interpolated path.

    Raises
    ------
    DivergenceError
        Annotated with ``T``.
    """
    if int(T) < 1:
        raise PreconditionError("T must be at least 1")
    grid = TimeGrid(problem.horizon, int(T))
    params = TrackerParams(grid.delta_T * beta, eta, epsilon, lambda_prior, beta)
    try:
        traj = run(problem, grid, params, z0)
    except DivergenceError as exc:
        raise DivergenceError(f"T={T}: {exc}", tau=exc.tau, component=exc.component) from exc
    return PiecewiseLinearPath.from_trajectory(traj)


def refinement_gap(path_a, path_b, probe_count=1001, eta=1.0):
    """Max eta-distance between two paths at ``probe_count`` uniform times."""
    if path_a.span != path_b.span:
        raise PreconditionError("paths cover different intervals")
    if path_a.n != path_b.n or path_a.m != path_b.m:
        raise PreconditionError("paths have different dimensions")
    t = np.linspace(*path_a.span, int(probe_count))
    d = path_a.stacked_at(t) - path_b.stacked_at(t)
    n = path_a.n
    return float(np.sqrt(np.max(np.sum(d[:, :n] ** 2, axis=1) + np.sum(d[:, n:] ** 2, axis=1) / eta)))


def drift(problem, x, lam, t, beta, eta, epsilon, prior):
    """``Phi(z, t)`` as a stacked vector."""
    g = np.asarray(problem.grad_cost(x, t), dtype=float)
    J = problem.jac(x, t)
    fx = problem.f(x, t)
    return beta * np.concatenate([-(g + J.T @ lam), eta * (fx - epsilon * (lam - prior))])


def inclusion_residual(path, problem, beta, eta, epsilon, lambda_prior=None, probe_count=None, s=None):
    """
    Largest midpoint residual of ``-dz/dt + Phi(z, t) in N_{C(t)}(z)``.

    At each probed segment midpoint the slope is the segment slope and the
    residual is ``||P_C(z + s v) - z|| / s`` with ``v = -slope + Phi``.
    Infeasible midpoints simply contribute a larger residual.

    Parameters
    ----------
    probe_count : int, optional
        Number of evenly spread segments to probe; all when omitted.
    s : float, optional
        Probe step, default the slot length.
    """
    n, m = problem.n, problem.m
    if path.n != n or path.m != m:
        raise PreconditionError("path dimensions do not match the problem")
    prior = np.zeros(m) if lambda_prior is None else np.asarray(lambda_prior, dtype=float)
    segs = path.times.size - 1
    if s is None:
        s = float(np.min(np.diff(path.times)))
    if not s > 0:
        raise PreconditionError("probe step s must be positive")
    idx = np.arange(segs) if probe_count is None or probe_count >= segs else \
        np.unique(np.linspace(0, segs - 1, int(probe_count)).round().astype(int))
    slopes = path.slopes()
    worst = 0.0
    for k in idx:
        tm = 0.5 * (path.times[k] + path.times[k + 1])
        zm = 0.5 * (np.concatenate([path.xs[k], path.lams[k]]) + np.concatenate([path.xs[k + 1], path.lams[k + 1]]))
        x, lam = zm[:n], zm[n:]
        v = -slopes[k] + drift(problem, x, lam, tm, beta, eta, epsilon, prior)
        w = zm + s * v
        px = problem.project(w[:n], tm)
        pl = np.maximum(w[n:], 0.0)
        r = float(np.sqrt(np.sum((px - x) ** 2) + np.sum((pl - lam) ** 2))) / s
        worst = max(worst, r)
    return worst


def refinement_ladder(problem, z0, beta, eta, epsilon, lambda_prior=None, Ts=(250, 500, 1000, 2000, 4000),
                      probe_count=1001, workers=1, exact=None):
    """
    Runs at each ``T`` and the gaps/residuals between consecutive refinements.

    Parameters
    ----------
    exact : callable, optional
        ``t -> PrimalDual`` flow; adds the sup distance of each run to it.

    Returns
    -------
    list of dict
        One row per ``T`` with keys ``T``, ``delta_T``, ``gap`` (to the next
        ``T``, ``None`` for the last), ``residual`` and optionally ``error``.
    """
    Ts = [int(T) for T in Ts]

    def one(T):
        return refine_run(problem, z0, beta, eta, epsilon, lambda_prior, T)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(one, Ts))
    else:
        paths = [one(T) for T in Ts]
    rows = []
    for i, (T, p) in enumerate(zip(Ts, paths)):
        row = {"T": T, "delta_T": problem.horizon / T,
               "gap": refinement_gap(p, paths[i + 1], probe_count, eta) if i + 1 < len(paths) else None,
               "residual": inclusion_residual(p, problem, beta, eta, epsilon, lambda_prior)}
        if exact is not None:
            t = np.linspace(*p.span, int(probe_count))
            ex = np.array([np.concatenate([z.x, z.lam]) for z in map(exact, t)])
            d = p.stacked_at(t) - ex
            row["error"] = float(np.sqrt(np.max(np.sum(d[:, :p.n] ** 2, axis=1)
                                                + np.sum(d[:, p.n:] ** 2, axis=1) / eta)))
        rows.append(row)
    return rows


def observed_orders(values):
    """``log2(v_k / v_{k+1})`` for a sequence on a doubling ladder."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    return np.log2(v[:-1] / v[1:])


def _fmt(v):
    return repr(float(v))


def write_path_csv(path_obj, filename):
    """Nodes as ``t,x_1..x_n,lambda_1..lambda_m`` rows."""
    with open(filename, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(path_obj.n)]
                   + [f"lambda_{j + 1}" for j in range(path_obj.m)])
        for k in range(path_obj.times.size):
            w.writerow([_fmt(path_obj.times[k])] + [_fmt(v) for v in path_obj.xs[k]]
                       + [_fmt(v) for v in path_obj.lams[k]])


def write_ladder_csv(rows, filename):
    keys = ["T", "delta_T", "gap", "residual"] + (["error"] if rows and "error" in rows[0] else [])
    with open(filename, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([r["T"]] + ["" if r[k] is None else _fmt(r[k]) for k in keys[1:]])


def sweeping_example(horizon=1.0):
    """
    ``C(t) = {x in R^2 : x_1 >= t}`` with zero drift.

    Started at the origin the sweeping process has the solution
    ``x(t) = (t, 0)``.
    """
    return ProblemOracle(
        n=2, m=0, horizon=float(horizon),
        cost=lambda x, t: 0.0,
        grad_cost=lambda x, t: np.zeros(2),
        hess_cost=lambda x, t: np.zeros((2, 2)),
        feasible_set=Box(lambda t: np.array([t, -np.inf]), np.array([np.inf, np.inf])),
        name="sweeping",
    )
