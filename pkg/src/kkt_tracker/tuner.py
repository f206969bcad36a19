"""
Optimal ``(eta, epsilon)`` for the continuous-time eventual tracking bound.

For fixed ``delta`` and ``beta`` the bound is minimized on the curve
``eta = Lambda_m / epsilon``, where it reduces to the one-dimensional function

    b(eps) = (sigma_{Lambda/eps} / beta + sqrt(eps Lambda) M_lambda)
             / (Lambda - delta M_nc sqrt(Lambda / eps) / 4)

defined where the denominator is positive, i.e. for
``eps > Lambda x_l^2`` with ``x_l = delta M_nc / (4 Lambda)``, and unimodal
there when ``M_lambda M_nc > 0``.
"""

import math
from dataclasses import dataclass

import numpy as np

from kkt_tracker.certificates import gamma_and_continuous
from kkt_tracker.exceptions import DomainError, InvalidInputError, PreconditionError

__all__ = ["TunerProblem", "TuneResult", "b_of_eps", "tune", "unimodality_audit", "golden_section",
           "continuous_bound"]

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


@dataclass(frozen=True)
class TunerProblem:
    """
    Constants entering ``b``.

    ``sigma_of_eta`` maps ``eta`` to the trajectory speed ``sigma_eta``.
    """

    delta: float
    beta: float
    Lambda_m: float
    M_nc: float
    M_lambda: float
    sigma_of_eta: object

    def __post_init__(self):
        if not (self.delta > 0 and self.beta > 0):
            raise InvalidInputError("delta and beta must be positive")
        if not self.Lambda_m > 0:
            raise PreconditionError(f"Lambda_m must be positive, got {self.Lambda_m!r}")
        if self.M_nc < 0 or self.M_lambda < 0:
            raise InvalidInputError("M_nc and M_lambda must be nonnegative")

    @classmethod
    def from_constants(cls, const, beta):
        return cls(const.delta, float(beta), const.Lambda_m, const.M_nc, const.M_lambda, const.sigma_for)

    @property
    def eps_lower(self):
        # the denominator of b vanishes at Lambda x_l^2
        lam = self.Lambda_m
        return lam * (self.delta * self.M_nc / (4.0 * lam)) ** 2

    @property
    def degenerate(self):
        return self.M_lambda == 0 or self.M_nc == 0


def b_of_eps(tp, eps):
    """Eventual continuous-time bound on the curve ``eta = Lambda_m / eps``."""
    if not eps > tp.eps_lower:
        raise DomainError(f"eps = {eps!r} must exceed eps_lower = {tp.eps_lower!r}")
    lam = tp.Lambda_m
    den = lam - tp.delta * tp.M_nc * math.sqrt(lam / eps) / 4.0
    if not den > 0:
        raise DomainError(f"denominator vanishes at eps = {eps!r}")
    return (tp.sigma_of_eta(lam / eps) / tp.beta + math.sqrt(eps * lam) * tp.M_lambda) / den


def continuous_bound(tp, eta, eps):
    """Continuous-time eventual bound and margin at an arbitrary ``(eta, eps)``."""
    cb = gamma_and_continuous(tp.Lambda_m, tp.M_nc, tp.M_lambda, tp.sigma_of_eta(eta), tp.delta,
                              tp.beta, eta, eps)
    return cb.eventual, cb.margin


def golden_section(f, a, b, tol):
    """Golden-section search for a minimizer of a unimodal ``f`` on ``[a, b]``."""
    h = b - a
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = f(c), f(d)
    while h > tol * (1.0 + abs(0.5 * (a + b))):
        if yc < yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)
    return c if yc < yd else d


def _bracket(tp, max_doublings=60):
    lo = tp.eps_lower
    e = 2.0 * lo if lo > 0 else 1e-12 * tp.Lambda_m
    pts = [e]
    vals = [b_of_eps(tp, e)]
    rises = 0
    for _ in range(max_doublings):
        e *= 2.0
        pts.append(e)
        vals.append(b_of_eps(tp, e))
        rises = rises + 1 if vals[-1] > vals[-2] else 0
        if rises == 2:
            j = int(np.argmin(vals))
            left = pts[j - 1] if j > 0 else lo
            return left, pts[j + 1]
    raise PreconditionError(f"no bracket found within {max_doublings} doublings")


def _exact_eps(lam, eps):
    """A float next to ``eps`` with ``(lam / e) * e == lam`` (``eps`` itself if it works)."""
    up = down = eps
    for _ in range(64):
        for e in (up, down):
            if (lam / e) * e == lam:
                return e
        up = np.nextafter(up, np.inf)
        down = np.nextafter(down, 0.0)
    return eps


def unimodality_audit(tp, lo, hi, points=1000):
    """Count sign changes of consecutive differences of ``b`` on a geometric grid."""
    start = lo * (1 + 1e-9) if lo > 0 else hi * 1e-9
    grid = np.geomspace(start, hi, points)
    vals = np.array([b_of_eps(tp, e) for e in grid])
    s = np.sign(np.diff(vals))
    s = s[s != 0]
    changes = int(np.sum(s[1:] != s[:-1]))
    return {"sign_changes": changes, "unimodal": changes <= 1}


@dataclass(frozen=True)
class TuneResult:
    eps_star: float
    eta_star: float
    bound: float
    degenerate: bool
    feasible: bool
    margin: float
    unimodal: bool
    bracket: tuple

    def as_dict(self):
        return {"eps_star": self.eps_star, "eta_star": self.eta_star, "bound": self.bound,
                "degenerate": self.degenerate, "feasible": self.feasible, "margin": self.margin,
                "unimodal": self.unimodal, "bracket": list(self.bracket)}


def tune(tp, tol=1e-8, grid_points=10001):
    """
    Minimize ``b`` and return ``eps*``, ``eta* = Lambda_m / eps*`` and the bound.

    The bracket grows by doubling from ``2 eps_lower`` until ``b`` rises twice
    in a row; golden-section search then refines to ``tol (1 + eps)``. In the
    degenerate cases ``M_lambda = 0`` or ``M_nc = 0`` the structure behind the
    search is absent, so the minimizer of a geometric grid is returned and
    ``degenerate`` is set. ``feasible`` reports whether the continuous-time
    condition holds at the result.
    """
    lam = tp.Lambda_m
    f = lambda e: b_of_eps(tp, e)
    if tp.degenerate:
        lo = tp.eps_lower * (1 + 1e-6) if tp.eps_lower > 0 else 1e-9 * lam
        hi = max(1e6 * lo, 1e3 * lam)
        grid = np.geomspace(lo, hi, grid_points)
        vals = np.array([f(e) for e in grid])
        eps = float(grid[int(np.argmin(vals))])
        bracket = (float(lo), float(hi))
        unimodal = unimodality_audit(tp, lo, hi)["unimodal"]
    else:
        a, b = _bracket(tp)
        eps = golden_section(f, a, b, tol)
        bracket = (float(a), float(b))
        unimodal = unimodality_audit(tp, tp.eps_lower, b)["unimodal"]
    eps = float(_exact_eps(lam, eps))
    eta = lam / eps
    _, margin = continuous_bound(tp, eta, eps)
    return TuneResult(eps, eta, float(f(eps)), tp.degenerate, bool(margin > 0), float(margin),
                      bool(unimodal), bracket)
