"""
Sampled constants, contraction factors, feasibility margins and tracking bounds.

Every sup/inf over ``t in [0, S]`` and ``||u|| <= delta`` is estimated on a
finite grid: slots of the reference trajectory, radii ``delta k / R`` and unit
directions (coordinate axes plus seeded Gaussian directions). Sup estimates
are therefore lower bounds of the true sups and inf estimates upper bounds of
the true infs; an inflation factor widens them before they feed a
feasibility claim.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from kkt_tracker.core import eta_dist
from kkt_tracker.exceptions import (BoundNotApplicableError, InvalidInputError,
                                    PreconditionError)

__all__ = [
    "CertificateInputs",
    "Constants",
    "Feasibility",
    "ContinuousBound",
    "CertificateReport",
    "averaged_hessians",
    "bilinear_norm",
    "constants",
    "rho_kappa",
    "feasibility_discrete",
    "bounds_discrete",
    "gamma_and_continuous",
    "isolation_check",
    "isolation_pair",
    "witness_parameters",
    "search_parameters",
    "certify",
    "SAMPLED",
]

SAMPLED = "sampled-estimate"


@dataclass(frozen=True)
class CertificateInputs:
    """
    Sampling plan for the sup/inf estimates.

    Parameters
    ----------
    delta : float
        Tube radius around the primal KKT trajectory.
    t_grid_count : int
        Slots sampled, spread evenly over the reference grid. A plan with
        ``2 c - 1`` slots contains the slots of a plan with ``c``.
    dir_count : int
        Pseudorandom unit directions added to the ``2 n`` coordinate
        directions.
    radius_count : int
        Radii ``delta k / R`` for ``k = 1..R``; ``u = 0`` is always included.
    quadrature_nodes : int
        Gauss-Legendre nodes for the averaged Hessians.
    refine_steps : int
        Projected-gradient refinement steps applied to the best sample per
        slot; 0 disables refinement.
    inflation : float
        Safety factor (>= 1) applied by :meth:`Constants.inflated`.
    workers : int, optional
        Thread pool size; default from ``KKT_TRACKER_WORKERS`` or 1.
    """

    delta: float
    t_grid_count: int = 17
    dir_count: int = 8
    radius_count: int = 4
    quadrature_nodes: int = 8
    seed: int = 0
    refine_steps: int = 20
    inflation: float = 1.1
    workers: object = None

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidInputError(f"delta must be positive, got {self.delta!r}")
        for name in ("t_grid_count", "radius_count"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be at least 1")
        if self.dir_count < 0 or self.refine_steps < 0:
            raise InvalidInputError("dir_count and refine_steps must be nonnegative")
        if self.quadrature_nodes < 2:
            raise InvalidInputError("quadrature_nodes must be at least 2")
        if not self.inflation >= 1:
            raise InvalidInputError("inflation must be at least 1")

    def pool_size(self):
        if self.workers is not None:
            return max(1, int(self.workers))
        env = os.environ.get("KKT_TRACKER_WORKERS")
        return max(1, int(env)) if env else 1


def _sym(A):
    return 0.5 * (A + A.T)


def averaged_hessians(problem, z_star, t, u, nodes=8):
    """
    Averaged Hessians along the segment ``x* + theta u``.

    Returns
    -------
    H_L : ndarray (n, n)
        ``int_0^1 Hess_x L_nc(x* + theta u, lam*) dtheta``.
    H_fc : ndarray (m, n, n)
        ``int_0^1 2 (1 - theta) Hess f_c_i(x* + theta u) dtheta``.
    """
    if nodes < 2:
        raise InvalidInputError("need at least 2 quadrature nodes")
    theta, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * (theta + 1.0)
    w = 0.5 * w
    n, m = problem.n, problem.m
    u = np.asarray(u, dtype=float)
    HL = np.zeros((n, n))
    Hc = np.zeros((m, n, n))
    for th, wk in zip(theta, w):
        y = z_star.x + th * u
        HL += wk * problem.hess_lagrangian_nc(y, z_star.lam, t)
        if problem.has_convex and m:
            Hc += (2.0 * (1.0 - th) * wk) * problem.hess_convex(y, t)
    HL = _sym(HL)
    for i in range(m):
        Hc[i] = _sym(Hc[i])
    return HL, Hc


def bilinear_norm(H, rounds=10, starts=None, seed=0):
    """
    Estimate ``sup_{|h1|=|h2|=1} || (h2^T H_i h1)_i ||`` for a Hessian stack.

    Alternates between the top singular pair of ``sum_i v_i H_i`` and the
    normalized image vector ``v``; each round cannot decrease the value.
    Exact for a single matrix.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[0]
    if m == 0 or not np.any(H):
        return 0.0
    if m == 1:
        return float(np.linalg.norm(H[0], 2))
    rng = np.random.default_rng(seed)
    vs = list(np.eye(m))
    extra = m if starts is None else starts
    for g in rng.standard_normal((extra, m)):
        vs.append(g / np.linalg.norm(g))
    best = 0.0
    for v in vs:
        val = 0.0
        for _ in range(rounds):
            A = np.tensordot(v, H, axes=1)
            U, s, Vt = np.linalg.svd(A)
            h1, h2 = Vt[0], U[:, 0]
            img = np.einsum("j,ijk,k->i", h2, H, h1)
            nv = float(np.linalg.norm(img))
            if nv <= val * (1 + 1e-14):
                val = max(val, nv)
                break
            val = nv
            v = img / nv
        best = max(best, val)
    return best


def _slot_indices(T, count):
    c = min(int(count), T + 1)
    if c <= 1:
        return [0]
    # exact rational rounding of k T / (c - 1), so a 2c-1 plan nests a c plan
    return sorted({(2 * k * T + (c - 1)) // (2 * (c - 1)) for k in range(c)})


def _directions(n, dir_count, seed):
    eye = np.eye(n)
    dirs = [d for i in range(n) for d in (eye[i], -eye[i])]
    if dir_count:
        g = np.random.default_rng(seed).standard_normal((dir_count, n))
        dirs += list(g / np.linalg.norm(g, axis=1, keepdims=True))
    return dirs


def _offsets(n, inputs):
    R = int(inputs.radius_count)
    radii = [inputs.delta * (k / R) for k in range(1, R + 1)]
    out = [np.zeros(n)]
    for d in _directions(n, inputs.dir_count, inputs.seed):
        for r in radii:
            out.append(r * d)
    return out


def _ball(u, delta):
    nu = float(np.linalg.norm(u))
    return u if nu <= delta else u * (delta / nu)


def _refine(phi, u0, v0, delta, steps, sign):
    """Projected-gradient ascent of ``sign * phi`` on the ball of radius ``delta``."""
    u, val = u0, v0
    step = 0.25 * delta
    h = 1e-6 * delta
    n = u.size
    for _ in range(steps):
        g = np.empty(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            g[j] = sign * (phi(_ball(u + e, delta)) - phi(_ball(u - e, delta))) / (2 * h)
        gn = float(np.linalg.norm(g))
        if gn <= 1e-10 * (1.0 + abs(val)):
            break
        cand = _ball(u + step * g / gn, delta)
        cv = phi(cand)
        if sign * cv > sign * val:
            u, val = cand, cv
        else:
            step *= 0.5
            if step < 1e-6 * delta:
                break
    return val


def _slot_samples(problem, z, t, offsets, inputs):
    nodes = inputs.quadrature_nodes
    HLs, HCs = [], []
    lam_min_vals, jac_vals, nc_vals, c_vals = [], [], [], []

    def lam_min_of(u):
        HL, Hc = averaged_hessians(problem, z, t, u, nodes)
        M = HL + 0.5 * np.tensordot(z.lam, Hc, axes=1) if problem.m else HL
        return float(np.linalg.eigvalsh(_sym(M))[0]), HL, Hc

    def jac_of(u):
        return float(np.linalg.norm(problem.jac(z.x + u, t), 2)) if problem.m else 0.0

    def nc_of(u):
        return bilinear_norm(problem.hess_nonconvex(z.x + u, t)) if problem.has_nonconvex else 0.0

    def c_of(u):
        return bilinear_norm(problem.hess_convex(z.x + u, t)) if problem.has_convex else 0.0

    for u in offsets:
        lm, HL, Hc = lam_min_of(u)
        lam_min_vals.append(lm)
        HLs.append(HL)
        HCs.append(np.tensordot(z.lam, Hc, axes=1) if problem.m else np.zeros_like(HL))
        jac_vals.append(jac_of(u))
        nc_vals.append(nc_of(u))
        c_vals.append(c_of(u))
    out = {
        "lam_min": min(lam_min_vals),
        "L_f": max(jac_vals),
        "M_nc": max(nc_vals),
        "M_c": max(c_vals),
        "HL": HLs,
        "HC": HCs,
    }
    if inputs.refine_steps:
        d = inputs.delta
        k = int(np.argmin(lam_min_vals))
        out["lam_min"] = min(out["lam_min"], _refine(lambda u: lam_min_of(u)[0], offsets[k],
                                                     lam_min_vals[k], d, inputs.refine_steps, -1.0))
        for key, fn, vals in (("L_f", jac_of, jac_vals), ("M_nc", nc_of, nc_vals), ("M_c", c_of, c_vals)):
            k = int(np.argmax(vals))
            if vals[k] > 0:
                out[key] = max(out[key], _refine(fn, offsets[k], vals[k], d, inputs.refine_steps, 1.0))
    return out


@dataclass
class Constants:
    """
    Sampled problem constants for one tube radius ``delta``.

    ``sigma_eta`` and ``D`` depend on ``eta``; use :meth:`sigma_for` and
    :meth:`D_for` to re-evaluate them at another ``eta``.
    """

    delta: float
    eta: float
    sigma_eta: float
    M_lambda: float
    M_nc: float
    M_c: float
    L_f: float
    D: float
    Lambda_m: float
    lam_sup: float
    delta_T: float
    HL: np.ndarray = field(repr=False, default=None)
    HC: np.ndarray = field(repr=False, default=None)
    diffs: tuple = field(repr=False, default=None)
    inflation: float = 1.0
    metadata: dict = field(default_factory=dict)

    def sigma_for(self, eta):
        """``max_k ||z*_k - z*_{k-1}||_eta / delta_T`` reweighted for ``eta``."""
        dx2, dl2 = self.diffs
        if dx2.size == 0:
            return 0.0
        return float(np.sqrt(np.max(dx2 + dl2 / eta))) / self.delta_T * self.inflation

    def D_for(self, eta):
        return float(np.sqrt(eta) * self.L_f + self.M_c * self.lam_sup)

    def at_eta(self, eta):
        """Copy with ``eta``-dependent fields re-evaluated."""
        return replace(self, eta=float(eta), sigma_eta=self.sigma_for(eta), D=self.D_for(eta))

    def inflated(self, factor=None):
        """
        Conservative copy: sup-type constants times ``factor``, ``Lambda_m``
        moved toward lower values by the same factor.
        """
        f = self.metadata.get("inflation_requested", 1.0) if factor is None else float(factor)
        if f < 1:
            raise InvalidInputError("inflation factor must be at least 1")
        if self.inflation != 1.0:
            raise PreconditionError("constants are already inflated")
        lam = self.Lambda_m / f if self.Lambda_m > 0 else self.Lambda_m * f
        out = replace(self, sigma_eta=self.sigma_eta * f, M_lambda=self.M_lambda * f,
                      M_nc=self.M_nc * f, M_c=self.M_c * f, L_f=self.L_f * f,
                      lam_sup=self.lam_sup * f, Lambda_m=lam, inflation=f,
                      metadata=dict(self.metadata))
        out.D = out.D_for(out.eta)
        return out

    def as_dict(self):
        keys = ("delta", "eta", "sigma_eta", "M_lambda", "M_nc", "M_c", "L_f", "D", "Lambda_m",
                "lam_sup", "delta_T", "inflation")
        return {k: float(getattr(self, k)) for k in keys}


def constants(problem, reference, inputs, eta, lambda_prior=None):
    """
    Estimate the tube constants along a certified reference trajectory.

    Parameters
    ----------
    problem : ProblemOracle
    reference : Trajectory
        KKT trajectory including slot 0.
    inputs : CertificateInputs
    eta : float
    lambda_prior : array_like, optional

    Returns
    -------
    Constants
        Raw (uninflated) sampled estimates; every value is a
        ``sampled-estimate``.
    """
    if len(reference) < 2:
        raise PreconditionError("reference needs at least two points to estimate sigma_eta")
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    m = problem.m
    prior = np.zeros(m) if lambda_prior is None else np.asarray(lambda_prior, dtype=float)
    dT = reference.grid.delta_T
    dx = np.diff(reference.xs, axis=0)
    dl = np.diff(reference.lams, axis=0)
    diffs = (np.sum(dx * dx, axis=1), np.sum(dl * dl, axis=1))
    sigma = float(np.sqrt(np.max(diffs[0] + diffs[1] / eta))) / dT
    M_lambda = float(np.max(np.linalg.norm(reference.lams - prior, axis=1))) if m else 0.0
    lam_sup = float(np.max(np.linalg.norm(reference.lams, axis=1))) if m else 0.0

    slots = _slot_indices(reference.grid.T, inputs.t_grid_count)
    offsets = _offsets(problem.n, inputs)
    times = reference.grid.times()

    def work(k):
        return _slot_samples(problem, reference.point(k), float(times[k]), offsets, inputs)

    workers = inputs.pool_size()
    if workers > 1 and len(slots) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, slots))
    else:
        results = [work(k) for k in slots]

    M_c = max(r["M_c"] for r in results)
    L_f = max(r["L_f"] for r in results)
    const = Constants(
        delta=float(inputs.delta), eta=float(eta), sigma_eta=sigma, M_lambda=M_lambda,
        M_nc=max(r["M_nc"] for r in results), M_c=M_c, L_f=L_f,
        D=float(np.sqrt(eta) * L_f + M_c * lam_sup),
        Lambda_m=min(r["lam_min"] for r in results), lam_sup=lam_sup, delta_T=dT,
        HL=np.array([H for r in results for H in r["HL"]]),
        HC=np.array([H for r in results for H in r["HC"]]),
        diffs=diffs,
        metadata={
            "tag": SAMPLED,
            "slots": [int(k) for k in slots],
            "offsets_per_slot": len(offsets),
            "dir_count": int(inputs.dir_count),
            "radius_count": int(inputs.radius_count),
            "quadrature_nodes": int(inputs.quadrature_nodes),
            "refine_steps": int(inputs.refine_steps),
            "seed": int(inputs.seed),
            "inflation_requested": float(inputs.inflation),
        },
    )
    return const


def rho_kappa(const, alpha, eta, epsilon):
    """
    Contraction factor ``rho``, its primal part ``rho_P`` and ``kappa``.

    ``rho_P`` is the sampled sup of
    ``||(I - alpha H_L)^2 - alpha (1 - eta alpha eps) sum_i lam*_i H_fc_i||``.
    ``D`` is re-evaluated at ``eta``; with inflated constants ``rho_P`` is
    pushed toward 1 by the same factor.

    Returns
    -------
    (rho_P, rho, kappa)
    """
    for name, v in (("alpha", alpha), ("eta", eta), ("epsilon", epsilon)):
        if not (np.isfinite(v) and v > 0):
            raise InvalidInputError(f"{name} must be positive, got {v!r}")
    c = 1.0 - eta * alpha * epsilon
    if not 0 < c <= 1:
        raise InvalidInputError(f"1 - eta*alpha*epsilon = {c!r} must lie in (0, 1]")
    n = const.HL.shape[1]
    eye = np.eye(n)
    rho_p = 0.0
    sup_shift = 0.0
    for HL, HC in zip(const.HL, const.HC):
        A = eye - alpha * HL
        rho_p = max(rho_p, float(np.linalg.norm(_sym(A @ A - alpha * c * HC), 2)))
        sup_shift = max(sup_shift, float(np.linalg.norm(eta * epsilon * eye - HL, 2)))
    f = const.inflation
    if f != 1.0:
        rho_p = 1.0 - (1.0 - rho_p) / f if rho_p < 1 else rho_p * f
        sup_shift *= f
    D = const.D_for(eta)
    rho_sq = (max(rho_p, c * c) + alpha * c * np.sqrt(eta) * const.delta * const.M_nc / 2.0
              + alpha * alpha * (2.0 * sup_shift * D + D * D))
    rho = float(np.sqrt(rho_sq))
    kappa = max(1.0, c / rho, np.sqrt(eta) * alpha * const.L_f / rho)
    return float(rho_p), rho, float(kappa)


@dataclass(frozen=True)
class Feasibility:
    """Tracking condition margin (with drift term) and parameter-tuple margin (without)."""

    margin: float
    feasible: bool
    params_margin: float
    params_feasible: bool


def feasibility_discrete(rho, kappa, delta, alpha, eta, epsilon, sigma_eta, delta_T, M_lambda):
    """
    ``margin = (1 - rho) delta - kappa sqrt(eta) alpha eps M_lambda - sigma_eta delta_T``.

    ``params_margin`` drops the drift term ``sigma_eta delta_T``.
    """
    reg = kappa * np.sqrt(eta) * alpha * epsilon * M_lambda
    pm = (1.0 - rho) * delta - reg
    margin = pm - sigma_eta * delta_T
    return Feasibility(float(margin), bool(margin > 0), float(pm), bool(pm > 0))


def bounds_discrete(rho, kappa, delta, alpha, eta, epsilon, sigma_eta, delta_T, M_lambda, z0_error, tau):
    """
    Per-step and eventual discrete tracking bounds.

    Parameters
    ----------
    z0_error : float
        ``||z_0 - z*_1||_eta``; must not exceed ``delta``.
    tau : int or array_like
        Slot index (or indices) for the per-step bound.

    Returns
    -------
    (per_step, eventual)

    Raises
    ------
    BoundNotApplicableError
        When the tracking condition fails or the start is outside the ball.
    """
    feas = feasibility_discrete(rho, kappa, delta, alpha, eta, epsilon, sigma_eta, delta_T, M_lambda)
    if not feas.feasible:
        raise BoundNotApplicableError(f"tracking condition fails (margin {feas.margin:.3e})")
    if not z0_error <= delta:
        raise BoundNotApplicableError(f"initial error {z0_error:.3e} exceeds delta = {delta:.3e}")
    reg = kappa * np.sqrt(eta) * alpha * epsilon * M_lambda
    drift = sigma_eta * delta_T
    eventual = (rho * drift + reg) / (1.0 - rho)
    tau = np.asarray(tau, dtype=float)
    per_step = eventual + rho ** tau * (z0_error - (drift + reg) / (1.0 - rho))
    if per_step.ndim == 0:
        per_step = float(per_step)
    return per_step, float(eventual)


@dataclass(frozen=True)
class ContinuousBound:
    gamma: float
    margin: float
    eventual: object
    z0_error: object = None
    beta: float = None

    def curve(self, t):
        """``eventual + exp(-beta gamma t) (z0_error - eventual)``."""
        if not self.margin > 0:
            raise BoundNotApplicableError(f"continuous-time condition fails (margin {self.margin:.3e})")
        if self.z0_error is None:
            raise BoundNotApplicableError("no initial error given")
        return self.eventual + np.exp(-self.beta * self.gamma * np.asarray(t, dtype=float)) * (
            self.z0_error - self.eventual)


def gamma_and_continuous(Lambda_m, M_nc, M_lambda, sigma_eta, delta, beta, eta, epsilon, z0_error=None):
    """
    Continuous-time rate and bounds.

    ``gamma = min(Lambda_m, eta eps) - sqrt(eta) delta M_nc / 4``;
    ``margin = delta gamma - sqrt(eta) eps M_lambda - sigma_eta / beta``;
    ``eventual = (sigma_eta / beta + sqrt(eta) eps M_lambda) / gamma`` when the
    margin is positive, else ``None``.

    Raises
    ------
    BoundNotApplicableError
        When ``z0_error`` is given but not below ``delta``.
    """
    gamma = min(Lambda_m, eta * epsilon) - np.sqrt(eta) * delta * M_nc / 4.0
    margin = delta * gamma - np.sqrt(eta) * epsilon * M_lambda - sigma_eta / beta
    eventual = (sigma_eta / beta + np.sqrt(eta) * epsilon * M_lambda) / gamma if margin > 0 else None
    if z0_error is not None and not z0_error < delta:
        raise BoundNotApplicableError(f"initial error {z0_error:.3e} is not below delta = {delta:.3e}")
    return ContinuousBound(float(gamma), float(margin), None if eventual is None else float(eventual),
                           z0_error, float(beta))


def isolation_check(Lambda_m, M_nc, delta, eta):
    """``Lambda_m - sqrt(eta) delta M_nc / 2``; positive rules out other KKT points in the ball."""
    return float(Lambda_m - np.sqrt(eta) * delta * M_nc / 2.0)


def isolation_pair(const1, const2, ref1, ref2, eta):
    """
    Pairwise isolation of two KKT trajectories.

    Returns
    -------
    dict
        ``margins`` (one per trajectory), ``separation`` (min eta-distance
        over shared slots), ``separation_margin`` (``separation - delta1 -
        delta2``), ``certified`` and the per-trajectory flag for the clause
        ``delta <= 2 M_lambda / sqrt(eta)``.
    """
    margins = [isolation_check(c.Lambda_m, c.M_nc, c.delta, eta) for c in (const1, const2)]
    dist = ref1.distance_to(ref2, eta)
    sep = float(np.min(dist))
    sep_margin = sep - const1.delta - const2.delta
    return {
        "margins": margins,
        "separation": sep,
        "separation_margin": float(sep_margin),
        "certified": bool(min(margins) > 0 and sep_margin > 0),
        "delta_within_multiplier_scale": [bool(c.delta <= 2.0 * c.M_lambda / np.sqrt(eta))
                                          for c in (const1, const2)],
    }


def witness_parameters(const, max_halvings=60):
    """
    Explicit parameter tuple with positive parameter-tuple margin.

    With ``Lambda = Lambda_m(delta) > M_lambda M_nc(delta)``: ``eta0 =
    (2 Lambda / (delta M_nc))^2``, ``eps0 = Lambda / eta0`` and ``alpha0`` the
    first of ``1, 1/2, 1/4, ...`` with a positive margin (``rho`` re-evaluated
    at ``eta0``).
    """
    lam, mnc, d = const.Lambda_m, const.M_nc, const.delta
    if not lam > 0:
        raise PreconditionError("Lambda_m must be positive")
    if not mnc > 0:
        raise PreconditionError("M_nc must be positive for the explicit recipe")
    if not lam > const.M_lambda * mnc:
        raise PreconditionError("need Lambda_m > M_lambda * M_nc")
    eta0 = (2.0 * lam / (d * mnc)) ** 2
    eps0 = lam / eta0
    alpha = 1.0
    for _ in range(max_halvings):
        if eta0 * alpha * eps0 < 1:
            _, rho, kappa = rho_kappa(const, alpha, eta0, eps0)
            feas = feasibility_discrete(rho, kappa, d, alpha, eta0, eps0, 0.0, 0.0, const.M_lambda)
            if feas.params_feasible:
                return {"delta": d, "alpha": alpha, "eta": eta0, "epsilon": eps0, "rho": rho,
                        "kappa": kappa, "params_margin": feas.params_margin}
        alpha *= 0.5
    raise PreconditionError("no step size found by halving")


def search_parameters(const, alphas, etas, epsilons):
    """
    Grid search for the parameter triple with the largest tracking margin.

    Returns
    -------
    dict or None
        Best ``alpha, eta, epsilon, rho, kappa, margin`` among triples with a
        positive margin, or ``None``.
    """
    best = None
    for eta in etas:
        sigma = const.sigma_for(eta)
        for alpha in alphas:
            for eps in epsilons:
                if not eta * alpha * eps < 1:
                    continue
                _, rho, kappa = rho_kappa(const, alpha, eta, eps)
                feas = feasibility_discrete(rho, kappa, const.delta, alpha, eta, eps, sigma,
                                            const.delta_T, const.M_lambda)
                if feas.feasible and (best is None or feas.margin > best["margin"]):
                    best = {"alpha": float(alpha), "eta": float(eta), "epsilon": float(eps),
                            "rho": rho, "kappa": kappa, "margin": feas.margin, "sigma_eta": sigma}
    return best


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if not np.isfinite(v):
            raise PreconditionError("report contains a non-finite value")
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class CertificateReport:
    """Flat map of named constants and bounds plus a metadata object."""

    values: dict
    metadata: dict

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        return _clean({**self.values, "metadata": self.metadata})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def certify(problem, reference, inputs, alpha, eta, epsilon, beta=None, lambda_prior=None, z0_error=None):
    """
    Full certificate for one parameter set.

    The constants are inflated by ``inputs.inflation`` before they enter
    ``rho``, the margins and the bounds. Raw estimates are kept under
    ``metadata['raw']``.
    """
    raw = constants(problem, reference, inputs, eta, lambda_prior)
    const = raw.inflated(inputs.inflation)
    rho_p, rho, kappa = rho_kappa(const, alpha, eta, epsilon)
    dT = const.delta_T
    feas = feasibility_discrete(rho, kappa, const.delta, alpha, eta, epsilon, const.sigma_eta, dT,
                                const.M_lambda)
    values = dict(const.as_dict())
    values.update({"alpha": alpha, "epsilon": epsilon, "rho_P": rho_p, "rho": rho, "kappa": kappa,
                   "margin_discrete": feas.margin, "feasible_discrete": feas.feasible,
                   "margin_params": feas.params_margin, "feasible_params": feas.params_feasible,
                   "isolation_margin": isolation_check(const.Lambda_m, const.M_nc, const.delta, eta)})
    if feas.feasible:
        values["eventual_discrete"] = (rho * const.sigma_eta * dT
                                       + kappa * np.sqrt(eta) * alpha * epsilon * const.M_lambda) / (1 - rho)
    else:
        values["eventual_discrete"] = None
    if beta is not None:
        cb = gamma_and_continuous(const.Lambda_m, const.M_nc, const.M_lambda, const.sigma_eta,
                                  const.delta, beta, eta, epsilon)
        values.update({"beta": beta, "gamma": cb.gamma, "margin_continuous": cb.margin,
                       "eventual_continuous": cb.eventual})
    meta = dict(const.metadata)
    meta["raw"] = raw.as_dict()
    meta["problem"] = problem.name
    meta["T"] = reference.grid.T
    meta["S"] = reference.grid.S
    return CertificateReport(values, meta)


def eta_error(z, ref, eta):
    """``||z - ref||_eta`` for two PrimalDual points."""
    return eta_dist(z.x - ref.x, z.lam - ref.lam, eta)
