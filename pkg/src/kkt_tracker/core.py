"""
Primal-dual points, the eta-weighted norm and exact Euclidean projections.

Every set parameter may be a constant or a callable of time ``t``; it is
resolved at the time passed to :meth:`ConvexSet.project`.
"""

from dataclasses import dataclass

import numpy as np

from kkt_tracker.exceptions import InvalidInputError, PreconditionError

__all__ = [
    "PrimalDual",
    "ConvexSet",
    "AllSpace",
    "NonnegOrthant",
    "Box",
    "Ball",
    "CappedDisk",
    "Product",
    "eta_norm",
    "eta_dist",
    "project",
    "normal_cone_residual",
    "feasibility_tol",
]


def _as_vector(v, name="vector"):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PrimalDual:
    """A primal-dual pair ``z = (x, lam)`` with ``lam`` in the nonnegative orthant."""

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        x = _as_vector(self.x, "x")
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if x.size < 1:
            raise InvalidInputError("primal dimension must be at least 1")
        if np.any(lam < 0):
            i = int(np.flatnonzero(lam < 0)[0])
            raise InvalidInputError(f"multiplier lam[{i}] = {lam[i]!r} is negative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self):
        return self.x.size

    @property
    def m(self):
        return self.lam.size

    def stacked(self):
        return np.concatenate([self.x, self.lam])

    @classmethod
    def from_stacked(cls, v, n):
        v = np.asarray(v, dtype=float)
        return cls(v[:n].copy(), v[n:].copy())


def eta_norm(z, eta):
    """
    Weighted norm ``sqrt(||x||^2 + ||lam||^2 / eta)``.

    Parameters
    ----------
    z : PrimalDual
        The point to measure. Differences of points should be formed with
        :func:`eta_dist`, since a difference may have negative multipliers.
    eta : float
        Positive dual weighting.
    """
    return eta_dist(z.x, z.lam, eta)


def eta_dist(dx, dlam, eta):
    """eta-norm of a raw primal/dual pair of arrays (signs unrestricted)."""
    if not eta > 0:
        raise InvalidInputError(f"eta must be positive, got {eta!r}")
    dx = np.asarray(dx, dtype=float)
    dlam = np.asarray(dlam, dtype=float)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
        raise InvalidInputError("eta_norm received non-finite entries")
    return float(np.sqrt(dx @ dx + (dlam @ dlam) / eta))


def feasibility_tol(z):
    """Membership tolerance ``1e-9 * (1 + ||z||)``."""
    return 1e-9 * (1.0 + float(np.linalg.norm(z)))


def _param(value, t):
    return value(t) if callable(value) else value


class ConvexSet:
    """Base class for closed convex sets with an exact projector."""

    kind = "abstract"

    def dim(self, t=0.0):
        raise NotImplementedError

    def _project(self, v, t):
        raise NotImplementedError

    def project(self, v, t=0.0):
        v = _as_vector(v)
        d = self.dim(t)
        if v.size != d:
            raise InvalidInputError(f"{self.kind}: expected a vector of length {d}, got {v.size}")
        return self._project(v, t)

    def contains(self, v, t=0.0, tol=None):
        v = _as_vector(v)
        if tol is None:
            tol = feasibility_tol(v)
        return float(np.linalg.norm(self.project(v, t) - v)) <= tol


class AllSpace(ConvexSet):
    kind = "all-space"

    def __init__(self, n):
        self.n = int(n)

    def dim(self, t=0.0):
        return self.n

    def _project(self, v, t):
        return v.copy()


class NonnegOrthant(ConvexSet):
    kind = "nonneg-orthant"

    def __init__(self, n):
        self.n = int(n)

    def dim(self, t=0.0):
        return self.n

    def _project(self, v, t):
        return np.maximum(v, 0.0)


class Box(ConvexSet):
    """``{v : lo <= v <= hi}``; infinite bounds are allowed."""

    kind = "box"

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi

    def bounds(self, t):
        lo = _as_vector(_param(self.lo, t), "lo")
        hi = _as_vector(_param(self.hi, t), "hi")
        if lo.shape != hi.shape:
            raise InvalidInputError("box bounds have different lengths")
        if np.any(lo > hi):
            raise InvalidInputError("box is empty: lo > hi in some component")
        return lo, hi

    def dim(self, t=0.0):
        return self.bounds(t)[0].size

    def _project(self, v, t):
        lo, hi = self.bounds(t)
        return np.minimum(np.maximum(v, lo), hi)


class Ball(ConvexSet):
    kind = "ball"

    def __init__(self, center, radius):
        self.center = center
        self.radius = radius

    def dim(self, t=0.0):
        return _as_vector(_param(self.center, t)).size

    def _project(self, v, t):
        c = _as_vector(_param(self.center, t))
        r = float(_param(self.radius, t))
        if r < 0:
            raise InvalidInputError("ball radius must be nonnegative")
        d = v - c
        nd = float(np.linalg.norm(d))
        if nd <= r:
            return v.copy()
        return c + (r / nd) * d


class CappedDisk(ConvexSet):
    """
    Inverter operating region ``{(p, q) : 0 <= p <= pmax, p^2 + q^2 <= smax^2}``.

    The projection is exact: the nearest point is either the input itself or
    the nearest point on one of the boundary pieces (the ``p = 0`` segment,
    the ``p = pmax`` segment, the circular arc) or one of their end points.
    """

    kind = "capped-disk"

    def __init__(self, pmax, smax):
        self.pmax = pmax
        self.smax = smax

    def dim(self, t=0.0):
        return 2

    def _params(self, t):
        pmax = float(_param(self.pmax, t))
        smax = float(_param(self.smax, t))
        if not (pmax >= 0 and smax > 0):
            raise InvalidInputError(f"capped-disk needs pmax >= 0 and smax > 0, got {pmax}, {smax}")
        return pmax, smax

    def _project(self, v, t):
        pmax, smax = self._params(t)
        p, q = v
        pe = min(pmax, smax)
        if 0.0 <= p <= pmax and p * p + q * q <= smax * smax:
            return v.copy()
        h = np.sqrt(max(smax * smax - pe * pe, 0.0))
        cands = [
            (0.0, min(max(q, -smax), smax)),
            (0.0, smax),
            (0.0, -smax),
            (pe, h),
            (pe, -h),
        ]
        if pmax <= smax:
            cands.append((pmax, min(max(q, -h), h)))
        r = np.hypot(p, q)
        if r > 0:
            pr, qr = smax * p / r, smax * q / r
            if 0.0 <= pr <= pe:
                cands.append((pr, qr))
        best, best_d = None, np.inf
        for cp, cq in cands:
            # circle candidates can sit a rounding error outside the disk
            if cp * cp + cq * cq > smax * smax * (1 + 1e-15) + 1e-300:
                continue
            d = (cp - p) ** 2 + (cq - q) ** 2
            if d < best_d:
                best, best_d = (cp, cq), d
        return np.array(best)


class Product(ConvexSet):
    """Cartesian product; projects blockwise."""

    kind = "product"

    def __init__(self, parts):
        self.parts = list(parts)

    def dim(self, t=0.0):
        return sum(p.dim(t) for p in self.parts)

    def _project(self, v, t):
        out = np.empty_like(v)
        k = 0
        for part in self.parts:
            d = part.dim(t)
            out[k:k + d] = part._project(v[k:k + d], t)
            k += d
        return out


def project(cset, v, t=0.0):
    """Euclidean projection of ``v`` onto ``cset`` at time ``t``."""
    return cset.project(v, t)


def normal_cone_residual(cset, z, v, t=0.0, s=1.0):
    """
    Distance-style certificate for ``v in N_C(z)``.

    Returns ``||P_C(z + s v) - z|| / s``, which vanishes exactly when ``v``
    lies in the normal cone of the convex set at ``z``.
    """
    if not s > 0:
        raise PreconditionError("probe step s must be positive")
    z = _as_vector(z)
    v = _as_vector(v)
    if not cset.contains(z, t):
        raise PreconditionError("z is not in the set (tolerance 1e-9*(1+||z||))")
    return float(np.linalg.norm(cset.project(z + s * v, t) - z)) / s
