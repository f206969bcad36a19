"""
Built-in time-varying scenarios.

``quadratic-tracking``
    Convex quadratic cost, one affine constraint, fixed box. Closed-form KKT
    trajectory available.
``keepout-disk``
    Quadratic cost with a concave keep-out constraint ``r^2 - ||x - a(t)||^2``.
``double-well``
    Scalar problem whose feasible set is two disjoint intervals; it has two
    isolated KKT trajectories in closed form.
``feeder-surrogate``
    Inverter dispatch on a radial feeder with an affine voltage model and
    capped-disk operating regions; profiles come from CSV or are synthesized.
"""

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from kkt_tracker.core import Box, CappedDisk, PrimalDual, Product
from kkt_tracker.exceptions import InvalidInputError, PreconditionError
from kkt_tracker.problem import ProblemOracle

__all__ = [
    "QuadraticTrackingConfig",
    "KeepoutDiskConfig",
    "DoubleWellConfig",
    "FeederSurrogateConfig",
    "Scenario",
    "Profiles",
    "SCENARIO_NAMES",
    "build_scenario",
    "scenario_config",
    "keepout_geometric_kkt",
    "read_profiles_csv",
    "write_profiles_csv",
    "synthetic_profiles",
]

TWO_PI = 2.0 * np.pi


def _motion(offset, slope, amp, freq, t):
    return offset + slope * t + amp * np.sin(TWO_PI * freq * t)


def _vec(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy() if np.ndim(value) == 0 \
        else np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise InvalidInputError(f"{name} must be a scalar or a length-{n} vector")
    return arr


def _spd(Q, n, name="Q"):
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float).reshape(n, n)
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise InvalidInputError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(Q).min() <= 0:
        raise InvalidInputError(f"{name} must be positive definite")
    return Q


@dataclass
class Scenario:
    """A built problem plus scenario-specific helpers."""

    problem: ProblemOracle
    config: object
    closed_form: object = None
    seed_point: object = None
    extras: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# quadratic tracking


@dataclass
class QuadraticTrackingConfig:
    """``c = 1/2 (x - b(t))^T Q (x - b(t))``, ``a^T x <= g(t)``, ``x`` in a box.

    ``b(t) = b_offset + b_slope t + b_amp sin(2 pi b_freq t)``; ``g`` likewise.
    """

    n: int = 1
    Q: object = None
    b_offset: object = 0.0
    b_slope: object = 1.0
    b_amp: object = 0.0
    b_freq: object = 0.0
    a: object = 1.0
    g_offset: float = 0.5
    g_slope: float = 0.0
    g_amp: float = 0.0
    g_freq: float = 0.0
    box_lo: object = -10.0
    box_hi: object = 10.0
    horizon: float = 1.0


def _build_quadratic_tracking(cfg):
    n = int(cfg.n)
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    Q = _spd(cfg.Q, n)
    b0, b1, ba, bf = (_vec(v, n, k) for v, k in ((cfg.b_offset, "b_offset"), (cfg.b_slope, "b_slope"),
                                                  (cfg.b_amp, "b_amp"), (cfg.b_freq, "b_freq")))
    a = _vec(cfg.a, n, "a")
    lo, hi = _vec(cfg.box_lo, n, "box_lo"), _vec(cfg.box_hi, n, "box_hi")
    box = Box(lo, hi)
    box.bounds(0.0)

    def b(t):
        return _motion(b0, b1, ba, bf, t)

    def g(t):
        return _motion(cfg.g_offset, cfg.g_slope, cfg.g_amp, cfg.g_freq, t)

    A = a.reshape(1, n)
    zero_h = np.zeros((n, n))
    problem = ProblemOracle(
        n=n, m=1, horizon=float(cfg.horizon),
        cost=lambda x, t: 0.5 * (x - b(t)) @ Q @ (x - b(t)),
        grad_cost=lambda x, t: Q @ (x - b(t)),
        hess_cost=lambda x, t: Q,
        f_convex=lambda x, t: np.array([a @ x - g(t)]),
        jac_convex=lambda x, t: A,
        hess_convex_i=lambda x, t, i: zero_h,
        feasible_set=box,
        name="quadratic-tracking",
    )
    Qa = np.linalg.solve(Q, a)
    aQa = float(a @ Qa)

    def closed_form(t):
        bt = b(t)
        viol = float(a @ bt - g(t))
        if viol <= 0:
            x, lam = bt, 0.0
        else:
            lam = viol / aQa
            x = bt - lam * Qa
        if not box.contains(x, t):
            raise PreconditionError("closed form assumes the box constraint is inactive")
        return PrimalDual(x, np.array([lam]))

    return Scenario(problem, cfg, closed_form=closed_form, seed_point=closed_form,
                    extras={"b": b, "g": g, "Q": Q, "a": a})


# --------------------------------------------------------------------------
# keep-out disk


@dataclass
class KeepoutDiskConfig:
    """Quadratic cost with the nonconvex constraint ``r^2 - ||x - a(t)||^2 <= 0``.

    ``a(t) = a_offset + a_amp (cos 2 pi a_freq t, sin 2 pi a_freq t, 0, ...)``.
    """

    n: int = 2
    Q: object = None
    b_offset: object = 0.0
    b_slope: object = 0.0
    b_amp: object = 0.0
    b_freq: object = 0.0
    a_offset: object = (0.5, 0.0)
    a_amp: float = 0.0
    a_freq: float = 0.0
    radius: float = 1.0
    horizon: float = 1.0


def _build_keepout_disk(cfg):
    n = int(cfg.n)
    if n < 2:
        raise InvalidInputError("keepout-disk needs n >= 2")
    Q = _spd(cfg.Q, n)
    r = float(cfg.radius)
    if r <= 0:
        raise InvalidInputError("radius must be positive")
    b0, b1, ba, bf = (_vec(v, n, k) for v, k in ((cfg.b_offset, "b_offset"), (cfg.b_slope, "b_slope"),
                                                  (cfg.b_amp, "b_amp"), (cfg.b_freq, "b_freq")))
    a0 = _vec(cfg.a_offset, n, "a_offset")

    def b(t):
        return _motion(b0, b1, ba, bf, t)

    def a(t):
        out = a0.copy()
        w = TWO_PI * cfg.a_freq * t
        out[0] += cfg.a_amp * np.cos(w)
        out[1] += cfg.a_amp * np.sin(w)
        return out

    hess = -2.0 * np.eye(n)
    problem = ProblemOracle(
        n=n, m=1, horizon=float(cfg.horizon),
        cost=lambda x, t: 0.5 * (x - b(t)) @ Q @ (x - b(t)),
        grad_cost=lambda x, t: Q @ (x - b(t)),
        hess_cost=lambda x, t: Q,
        f_nonconvex=lambda x, t: np.array([r * r - (x - a(t)) @ (x - a(t))]),
        jac_nonconvex=lambda x, t: (-2.0 * (x - a(t))).reshape(1, n),
        hess_nonconvex_i=lambda x, t, i: hess,
        name="keepout-disk",
    )
    sc = Scenario(problem, cfg, extras={"a": a, "b": b, "Q": Q, "radius": r})
    sc.seed_point = lambda t, branch="near": keepout_geometric_kkt(sc, t, branch)
    return sc


def keepout_geometric_kkt(scenario, t, branch="near"):
    """
    KKT point of the keep-out problem on the ray from the disk center through
    ``b(t)``, valid when ``Q = I`` and ``b(t)`` lies strictly inside the disk.

    ``branch='near'`` is the local minimizer (multiplier ``(r - d) / 2r``);
    ``branch='far'`` is the opposite point (multiplier ``(r + d) / 2r``).
    """
    a, b, r = scenario.extras["a"](t), scenario.extras["b"](t), scenario.extras["radius"]
    if not np.allclose(scenario.extras["Q"], np.eye(a.size)):
        raise PreconditionError("geometric KKT formula needs Q = I")
    d_vec = b - a
    d = float(np.linalg.norm(d_vec))
    if not 0 < d < r:
        raise PreconditionError("geometric KKT formula needs 0 < ||b - a|| < r")
    u = d_vec / d
    if branch == "near":
        return PrimalDual(a + r * u, np.array([(r - d) / (2 * r)]))
    if branch == "far":
        return PrimalDual(a - r * u, np.array([(r + d) / (2 * r)]))
    raise InvalidInputError(f"unknown branch {branch!r}")


# --------------------------------------------------------------------------
# double well


@dataclass
class DoubleWellConfig:
    """Scalar ``c = q/2 (x - b(t))^2`` with ``((x - a(t))^2 - 1)^2 - w^2 <= 0``.

    The feasible set is ``1 - w <= (x - a)^2 <= 1 + w``: two intervals.
    """

    q: float = 1.0
    w: float = 0.5
    b_offset: float = 0.0
    b_slope: float = 0.0
    b_amp: float = 0.1
    b_freq: float = 1.0
    a_offset: float = 0.0
    a_amp: float = 0.0
    a_freq: float = 0.0
    horizon: float = 1.0


def _build_double_well(cfg):
    q, w = float(cfg.q), float(cfg.w)
    if q <= 0 or not 0 < w < 1:
        raise InvalidInputError("double-well needs q > 0 and 0 < w < 1")

    def a(t):
        return _motion(cfg.a_offset, 0.0, cfg.a_amp, cfg.a_freq, t)

    def b(t):
        return _motion(cfg.b_offset, cfg.b_slope, cfg.b_amp, cfg.b_freq, t)

    def fnc(x, t):
        y = x[0] - a(t)
        return np.array([(y * y - 1.0) ** 2 - w * w])

    def jnc(x, t):
        y = x[0] - a(t)
        return np.array([[4.0 * y * (y * y - 1.0)]])

    def hnc(x, t, i):
        y = x[0] - a(t)
        return np.array([[12.0 * y * y - 4.0]])

    problem = ProblemOracle(
        n=1, m=1, horizon=float(cfg.horizon),
        cost=lambda x, t: 0.5 * q * (x[0] - b(t)) ** 2,
        grad_cost=lambda x, t: np.array([q * (x[0] - b(t))]),
        hess_cost=lambda x, t: np.array([[q]]),
        f_nonconvex=fnc, jac_nonconvex=jnc, hess_nonconvex_i=hnc,
        name="double-well",
    )
    s = np.sqrt(1.0 - w)

    def branch_point(t, branch="plus"):
        sign = {"plus": 1.0, "minus": -1.0}[branch]
        x = a(t) + sign * s
        lam = q * (x - b(t)) / (4.0 * sign * s * w)
        if lam < 0:
            raise PreconditionError("inner-boundary branch has a negative multiplier at this time")
        return PrimalDual(np.array([x]), np.array([lam]))

    return Scenario(problem, cfg, closed_form=branch_point, seed_point=branch_point,
                    extras={"a": a, "b": b})


# --------------------------------------------------------------------------
# feeder surrogate


@dataclass
class Profiles:
    """Load and PV profiles sampled at times ``t`` (rows)."""

    t: np.ndarray
    loads: np.ndarray
    pv: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.loads = np.atleast_2d(np.asarray(self.loads, dtype=float))
        self.pv = np.atleast_2d(np.asarray(self.pv, dtype=float))
        if not (self.loads.shape[0] == self.pv.shape[0] == self.t.size):
            raise InvalidInputError("profile columns have inconsistent lengths")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("profile times must be strictly increasing")
        if not (np.all(np.isfinite(self.loads)) and np.all(np.isfinite(self.pv))):
            raise InvalidInputError("profiles contain non-finite values")
        if np.any(self.pv < 0):
            raise InvalidInputError("PV availability must be nonnegative")

    def at(self, t):
        """Linear interpolation of all columns at time ``t`` (clamped to the ends)."""
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        if k < 0:
            return self.loads[0], self.pv[0]
        if k >= self.t.size - 1:
            return self.loads[-1], self.pv[-1]
        s = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        return ((1 - s) * self.loads[k] + s * self.loads[k + 1],
                (1 - s) * self.pv[k] + s * self.pv[k + 1])


def read_profiles_csv(path):
    """Read ``t,load_1..load_m,pv_1..pv_n`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if not header or header[0] != "t":
        raise InvalidInputError(f"{path}: first column must be 't'")
    load_cols = [i for i, h in enumerate(header) if h.startswith("load_")]
    pv_cols = [i for i, h in enumerate(header) if h.startswith("pv_")]
    if len(load_cols) + len(pv_cols) + 1 != len(header) or not load_cols or not pv_cols:
        raise InvalidInputError(f"{path}: header must be t,load_1..load_m,pv_1..pv_n")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Profiles(data[:, 0], data[:, load_cols], data[:, pv_cols])


def write_profiles_csv(path, profiles):
    m, n = profiles.loads.shape[1], profiles.pv.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"load_{j + 1}" for j in range(m)] + [f"pv_{i + 1}" for i in range(n)])
        for k in range(profiles.t.size):
            w.writerow([repr(float(profiles.t[k]))] + [repr(float(v)) for v in profiles.loads[k]]
                       + [repr(float(v)) for v in profiles.pv[k]])


def _smooth_noise(rng, times, knot_spacing, size):
    """Piecewise-linear interpolation of Gaussian knots; Lipschitz in time."""
    span = times[-1] - times[0]
    knots_t = np.linspace(times[0], times[-1], max(2, int(np.ceil(span / knot_spacing)) + 1))
    knots = rng.standard_normal((knots_t.size, size))
    return np.column_stack([np.interp(times, knots_t, knots[:, j]) for j in range(size)])


def synthetic_profiles(T, delta_T, n_bus, n_inv, seed=0, pv_peak=1.6, load_base=0.35,
                       cloud_depth=0.35, cloud_spacing=40.0):
    """
    Midday-like PV and load profiles with ``T + 1`` rows at ``t = k delta_T``.

    PV follows a half-sine envelope over the horizon modulated by smooth
    cloud noise; loads are a slow sinusoid plus small smooth noise.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(T + 1) * float(delta_T)
    S = t[-1] if T > 0 else 1.0
    envelope = 0.55 + 0.45 * np.sin(np.pi * (0.15 + 0.7 * t / S))
    peaks = pv_peak * rng.uniform(0.8, 1.0, n_inv)
    clouds = 1.0 - cloud_depth * np.clip(np.abs(_smooth_noise(rng, t, cloud_spacing, 1)), 0, 1.5) / 1.5
    pv = np.clip(envelope[:, None] * clouds * peaks[None, :], 0.0, None)
    base = load_base * rng.uniform(0.6, 1.4, n_bus)
    slow = 1.0 + 0.15 * np.sin(TWO_PI * t / S + rng.uniform(0, TWO_PI))
    loads = base[None, :] * (slow[:, None] + 0.05 * _smooth_noise(rng, t, 4 * cloud_spacing, n_bus))
    return Profiles(t, loads, pv)


@dataclass
class FeederSurrogateConfig:
    """
    Inverter dispatch on a synthetic radial feeder.

    Decision vector ``x = (p_1, q_1, ..., p_n, q_n)``; voltages follow the
    affine model ``V = v0 + R_inv p + X_inv q - R_bus p_L(t) - X_bus q_L(t)``
    with ``q_L = load_q_ratio * p_L``. Constraints ``V - v_max <= 0`` and
    ``v_min - V <= 0`` for every bus (``m = 2 * n_bus``).
    """

    n: int = 6
    n_bus: object = None
    T: int = 2000
    delta_T: float = 1.0
    c_p: object = 3.0
    c_q: object = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    v0: float = 1.0
    s_max: object = 3.5
    load_q_ratio: float = 0.5
    r_range: tuple = (0.002, 0.006)
    x_ratio: float = 0.6
    profile_csv: object = None
    pv_peak: float = 3.0
    load_base: float = 0.35
    seed: int = 0


def _radial_feeder(rng, n_bus, r_range, x_ratio):
    parents = np.array([rng.integers(0, k + 1) for k in range(n_bus)])  # bus k+1 hangs off parents[k]
    r_line = rng.uniform(r_range[0], r_range[1], n_bus)
    x_line = x_ratio * r_line * rng.uniform(0.8, 1.2, n_bus)
    paths = []
    for k in range(1, n_bus + 1):
        path, node = set(), k
        while node != 0:
            path.add(node)
            node = parents[node - 1]
        paths.append(path)
    R = np.zeros((n_bus, n_bus))
    X = np.zeros((n_bus, n_bus))
    for j in range(n_bus):
        for k in range(n_bus):
            common = [e - 1 for e in paths[j] & paths[k]]
            R[j, k] = r_line[common].sum()
            X[j, k] = x_line[common].sum()
    return parents, R, X


def _build_feeder_surrogate(cfg):
    n = int(cfg.n)
    n_bus = n if cfg.n_bus is None else int(cfg.n_bus)
    if n < 1 or n_bus < n:
        raise InvalidInputError("feeder needs n >= 1 inverters and n_bus >= n")
    if not cfg.v_min < cfg.v_max:
        raise InvalidInputError("v_min must be below v_max")
    T = int(cfg.T)
    rng = np.random.default_rng(cfg.seed)
    parents, R, X = _radial_feeder(rng, n_bus, cfg.r_range, cfg.x_ratio)
    inv_bus = np.sort(rng.choice(n_bus, size=n, replace=False))
    if cfg.profile_csv is not None:
        prof = read_profiles_csv(cfg.profile_csv)
        if prof.t.size < T:
            raise InvalidInputError(f"profile CSV has {prof.t.size} rows, need at least T = {T}")
        if prof.loads.shape[1] != n_bus or prof.pv.shape[1] != n:
            raise InvalidInputError(f"profile CSV must have {n_bus} load and {n} pv columns")
    else:
        prof = synthetic_profiles(T, cfg.delta_T, n_bus, n, seed=cfg.seed + 1,
                                  pv_peak=cfg.pv_peak, load_base=cfg.load_base)
    c_p, c_q = _vec(cfg.c_p, n, "c_p"), _vec(cfg.c_q, n, "c_q")
    s_max = _vec(cfg.s_max, n, "s_max")
    if np.any(c_p <= 0) or np.any(c_q <= 0) or np.any(s_max <= 0):
        raise InvalidInputError("c_p, c_q and s_max must be positive")

    Jv = np.zeros((n_bus, 2 * n))
    Jv[:, 0::2] = R[:, inv_bus]
    Jv[:, 1::2] = X[:, inv_bus]
    J = np.vstack([Jv, -Jv])
    m = 2 * n_bus
    hdiag = np.zeros(2 * n)
    hdiag[0::2] = 2 * c_p
    hdiag[1::2] = 2 * c_q
    H = np.diag(hdiag)
    zero_h = np.zeros((2 * n, 2 * n))
    cache = {}

    def at(t):
        hit = cache.get("t")
        if hit is not None and hit[0] == t:
            return hit[1]
        val = prof.at(t)
        cache["t"] = (t, val)
        return val

    def voltage(x, t):
        loads, _ = at(t)
        return cfg.v0 + Jv @ x - R @ loads - cfg.load_q_ratio * (X @ loads)

    def cost(x, t):
        pv = at(t)[1]
        return float(np.sum(c_p * (x[0::2] - pv) ** 2 + c_q * x[1::2] ** 2))

    def grad(x, t):
        pv = at(t)[1]
        g = np.empty(2 * n)
        g[0::2] = 2 * c_p * (x[0::2] - pv)
        g[1::2] = 2 * c_q * x[1::2]
        return g

    def fc(x, t):
        v = voltage(x, t)
        return np.concatenate([v - cfg.v_max, cfg.v_min - v])

    parts = [CappedDisk(pmax=(lambda t, i=i: at(t)[1][i]), smax=float(s_max[i])) for i in range(n)]
    problem = ProblemOracle(
        n=2 * n, m=m, horizon=T * float(cfg.delta_T),
        cost=cost, grad_cost=grad, hess_cost=lambda x, t: H,
        f_convex=fc, jac_convex=lambda x, t: J, hess_convex_i=lambda x, t, i: zero_h,
        feasible_set=Product(parts),
        name="feeder-surrogate",
    )

    def seed_point(t):
        x = np.zeros(2 * n)
        x[0::2] = at(t)[1]
        return PrimalDual(problem.project(x, t), np.zeros(m))

    return Scenario(problem, cfg, seed_point=seed_point,
                    extras={"voltage": voltage, "profiles": prof, "R": R, "X": X, "parents": parents,
                            "inv_bus": inv_bus, "v_min": cfg.v_min, "v_max": cfg.v_max})


# --------------------------------------------------------------------------

_REGISTRY = {
    "quadratic-tracking": (QuadraticTrackingConfig, _build_quadratic_tracking),
    "keepout-disk": (KeepoutDiskConfig, _build_keepout_disk),
    "double-well": (DoubleWellConfig, _build_double_well),
    "feeder-surrogate": (FeederSurrogateConfig, _build_feeder_surrogate),
}
SCENARIO_NAMES = tuple(_REGISTRY)


def scenario_config(name, **params):
    """Config object for scenario ``name``; unknown parameter names are rejected."""
    if name not in _REGISTRY:
        raise InvalidInputError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}")
    cls = _REGISTRY[name][0]
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise InvalidInputError(f"unknown parameter(s) for {name}: {', '.join(unknown)}")
    return cls(**params)


def build_scenario(cfg):
    """Build a :class:`Scenario` from one of the config dataclasses."""
    for cls, builder in _REGISTRY.values():
        if isinstance(cfg, cls):
            return builder(cfg)
    raise InvalidInputError(f"unknown scenario config type {type(cfg).__name__}")
