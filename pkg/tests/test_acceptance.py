"""
Acceptance suite: one test per criterion, each recording a PASS/FAIL line
that is printed in the pytest terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from kkt_tracker.catching import (inclusion_residual, observed_orders, refine_run, refinement_ladder,
                                  sweeping_example)
from kkt_tracker.certificates import (CertificateInputs, Constants, bounds_discrete, certify, constants,
                                      gamma_and_continuous, isolation_pair, rho_kappa, search_parameters)
from kkt_tracker.core import PrimalDual, eta_dist
from kkt_tracker.kkt_oracle import kkt_trajectory, solve_kkt
from kkt_tracker.problem import SampledProblem, TimeGrid, check_derivatives
from kkt_tracker.scenarios import SCENARIO_NAMES, build_scenario, keepout_geometric_kkt, scenario_config
from kkt_tracker.tracker import TrackerParams, run, step
from kkt_tracker.tuner import TunerProblem, b_of_eps, continuous_bound, tune


@pytest.fixture
def report(request):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(num, name, ok, detail):
        line = f"criterion {num:>2} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)

    return record


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# ---------------------------------------------------------------- criterion 1

def _kkt_points():
    """Ten KKT points on each of five scenario instances."""
    out = {}
    sc = build_scenario(scenario_config("quadratic-tracking", b_amp=0.3, b_freq=1.0))
    out["quadratic-tracking"] = (sc, [(t, sc.closed_form(t)) for t in np.linspace(0.0, 1.0, 10)])
    sc = build_scenario(scenario_config("quadratic-tracking", n=3, Q=[[2, 0.5, 0], [0.5, 1, 0], [0, 0, 3]],
                                        a=[1.0, -0.5, 0.2], b_amp=[0.3, 0.1, 0.2], b_freq=[1, 2, 0.5]))
    out["quadratic-tracking-3d"] = (sc, [(t, sc.closed_form(t)) for t in np.linspace(0.0, 1.0, 10)])
    sc = build_scenario(scenario_config("keepout-disk", a_amp=0.2, a_freq=1.0))
    out["keepout-disk"] = (sc, [(t, keepout_geometric_kkt(sc, t)) for t in np.linspace(0.0, 1.0, 10)])
    sc = build_scenario(scenario_config("double-well"))
    out["double-well"] = (sc, [(t, sc.closed_form(t, br)) for t in np.linspace(0.0, 1.0, 5)
                               for br in ("plus", "minus")])
    sc = build_scenario(scenario_config("feeder-surrogate"))
    out["feeder-surrogate"] = (sc, [(t, sc.seed_point(t)) for t in np.linspace(0.0, sc.problem.horizon, 10)])
    return out


def test_criterion_01_fixed_point_invariance(report):
    with Timer() as tm:
        worst = 0.0
        count = 0
        for name, (sc, pts) in _kkt_points().items():
            p = sc.problem
            for t, seed in pts:
                zs = solve_kkt(p, t, seed, tol=1e-14)
                params = TrackerParams(0.1, 1.0, 0.5, lambda_prior=zs.lam)
                z = step(zs, SampledProblem(p, t, 1), params)
                moved = np.linalg.norm(z.stacked() - zs.stacked()) / (1 + np.linalg.norm(zs.stacked()))
                worst = max(worst, moved)
                count += 1
    ok = count == 50 and worst <= 1e-12 and tm.elapsed < 1.0
    report(1, "fixed-point invariance", ok,
           f"{count} KKT points, max relative move {worst:.2e} <= 1e-12, {tm.elapsed:.2f}s < 1s")
    assert ok


# ---------------------------------------------------------------- criterion 2

def _quadratic_analytic_constants(sc, grid, delta, eta):
    # cost 1/2 (x - t)^2, constraint x <= 0.5: Q = 1, a = 1, lambda* = max(t - 0.5, 0)
    zs = [sc.closed_form(t) for t in grid.times()]
    xs = np.array([z.x for z in zs])
    ls = np.array([z.lam for z in zs])
    diffs = (np.sum(np.diff(xs, axis=0) ** 2, axis=1), np.sum(np.diff(ls, axis=0) ** 2, axis=1))
    dT = grid.delta_T
    sigma = float(np.sqrt(np.max(diffs[0] + diffs[1] / eta))) / dT
    return Constants(delta=delta, eta=eta, sigma_eta=sigma, M_lambda=0.5, M_nc=0.0, M_c=0.0, L_f=1.0,
                     D=np.sqrt(eta), Lambda_m=1.0, lam_sup=0.5, delta_T=dT,
                     HL=np.ones((1, 1, 1)), HC=np.zeros((1, 1, 1)), diffs=diffs)


def test_criterion_02_per_step_bound(report):
    with Timer() as tm:
        sc = build_scenario(scenario_config("quadratic-tracking"))
        grid = TimeGrid(1.0, 1000)
        delta = 1.0
        const = _quadratic_analytic_constants(sc, grid, delta, 1.0)
        best = search_parameters(const, np.geomspace(0.01, 0.5, 12), [0.25, 0.5, 1.0, 2.0, 4.0],
                                 [0.1, 0.25, 0.5, 1.0, 2.0])
        alpha, eta, eps = best["alpha"], best["eta"], best["epsilon"]
        c = const.at_eta(eta)
        _, rho, kappa = rho_kappa(c, alpha, eta, eps)
        z0 = PrimalDual([0.3], [0.2])
        z1 = sc.closed_form(grid.time(1))
        e0 = eta_dist(z0.x - z1.x, z0.lam - z1.lam, eta)
        per, eventual = bounds_discrete(rho, kappa, delta, alpha, eta, eps, c.sigma_eta, grid.delta_T,
                                        c.M_lambda, e0, np.arange(1, grid.T + 1))
        traj = run(sc.problem, grid, TrackerParams(alpha, eta, eps), z0, reference=sc.closed_form)
        excess = float(np.max(traj.error_eta[1:] - per))
    ok = excess <= 1e-9 and tm.elapsed < 10.0
    report(2, "per-step tracking bound", ok,
           f"alpha={alpha:.3g} eta={eta:g} eps={eps:g} rho={rho:.4f} margin={best['margin']:.3g}; "
           f"max(error - bound) = {excess:.2e} <= 1e-9, eventual {eventual:.3g}, {tm.elapsed:.2f}s < 10s")
    assert ok


# ---------------------------------------------------------------- criterion 3

def test_criterion_03_approximate_contraction(report):
    with Timer() as tm:
        sc = build_scenario(scenario_config("keepout-disk", a_amp=0.1, a_freq=0.5))
        grid = TimeGrid(1.0, 100)
        ref = kkt_trajectory(sc.problem, grid, lambda t: keepout_geometric_kkt(sc, t))
        delta, alpha, eta, eps = 0.1, 0.05, 1.0, 0.5
        rep = certify(sc.problem, ref, CertificateInputs(delta, inflation=1.1), alpha, eta, eps)
        rho, kappa, M_lambda = rep["rho"], rep["kappa"], rep["M_lambda"]
        reg = kappa * np.sqrt(eta) * alpha * eps * M_lambda
        params = TrackerParams(alpha, eta, eps)
        rng = np.random.default_rng(2024)
        worst = -np.inf
        trials = 0
        while trials < 500:
            tau = int(rng.integers(1, grid.T + 1))
            zs = ref.point(tau)
            v = rng.standard_normal(3)
            v *= delta * rng.uniform() ** (1 / 3) / np.linalg.norm(v)
            x = zs.x + v[:2]
            lam = zs.lam + np.sqrt(eta) * v[2:]
            if lam[0] < 0:
                continue
            prev = PrimalDual(x, lam)
            before = eta_dist(x - zs.x, lam - zs.lam, eta)
            new = step(prev, SampledProblem(sc.problem, grid.time(tau), tau), params)
            after = eta_dist(new.x - zs.x, new.lam - zs.lam, eta)
            worst = max(worst, after - (rho * before + reg))
            trials += 1
    ok = rho < 1 and worst <= 1e-6 and tm.elapsed < 30.0
    report(3, "approximate contraction", ok,
           f"certified rho={rho:.4f} kappa={kappa:.4f} (inflation 1.1); 500 trials, "
           f"max excess {worst:.2e} <= 1e-6, {tm.elapsed:.2f}s < 30s")
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_criterion_04_kappa_range_and_limits(report):
    with Timer() as tm:
        sck = build_scenario(scenario_config("keepout-disk", a_amp=0.1, a_freq=0.5))
        refk = kkt_trajectory(sck.problem, TimeGrid(1.0, 20), lambda t: keepout_geometric_kkt(sck, t))
        ck = constants(sck.problem, refk, CertificateInputs(0.1, t_grid_count=3, dir_count=2, refine_steps=0), eta=1.0)
        scq = build_scenario(scenario_config("quadratic-tracking"))
        refq = kkt_trajectory(scq.problem, TimeGrid(1.0, 20), scq.closed_form)
        cq = constants(scq.problem, refq, CertificateInputs(0.5, t_grid_count=3, dir_count=2, refine_steps=0), eta=1.0)
        rng = np.random.default_rng(7)
        kappas = []
        for c in (ck, cq):
            drawn = 0
            while drawn < 40:
                a, e, s = 10 ** rng.uniform(-6, -0.3), 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-3, 1)
                if e * a * s < 1:
                    kappas.append(rho_kappa(c, a, e, s)[2])
                    drawn += 1
        kmin, kmax = min(kappas), max(kappas)
        small = max(abs(rho_kappa(c, 1e-6, 1.0, 0.5)[2] - 1) for c in (ck, cq))
        eta, eps = 1.0, 0.5
        gamma = min(cq.Lambda_m, eta * eps) - np.sqrt(eta) * cq.delta * cq.M_nc / 4
        _, rho, _ = rho_kappa(cq, 1e-5, eta, eps)
        taylor = abs((1 - rho) / 1e-5 - gamma)
    ok = kmin >= 1 and kmax <= np.sqrt(2) + 1e-12 and small <= 1e-4 and taylor <= 0.05 * gamma and tm.elapsed < 1.0
    report(4, "kappa range and small-step limits", ok,
           f"kappa in [{kmin:.4f}, {kmax:.4f}] over {len(kappas)} draws; |kappa(1e-6) - 1| = {small:.1e}; "
           f"|(1-rho)/alpha - gamma| = {taylor:.2e} <= {0.05 * gamma:.3g}; {tm.elapsed:.2f}s < 1s")
    assert ok


# ---------------------------------------------------------------- criterion 5

def _tuner_example():
    # synthetic reference: primal on a circle of radius 0.2, multiplier oscillating by 0.1
    grid = TimeGrid(1.0, 200)
    t = grid.times()
    xs = 0.2 * np.column_stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)])
    ls = (0.2 + 0.1 * np.sin(2 * np.pi * t))[:, None]
    diffs = (np.sum(np.diff(xs, axis=0) ** 2, axis=1), np.sum(np.diff(ls, axis=0) ** 2, axis=1))
    const = Constants(delta=0.5, eta=1.0, sigma_eta=0.0, M_lambda=0.2, M_nc=0.5, M_c=0.0, L_f=0.0, D=0.0,
                      Lambda_m=1.0, lam_sup=0.3, delta_T=grid.delta_T, diffs=diffs)
    return TunerProblem.from_constants(const, beta=10.0)


def test_criterion_05_tuner(report):
    with Timer() as tm:
        tp = _tuner_example()
        res = tune(tp)
        lo = tp.eps_lower
        grid = np.linspace(lo, 100 * lo, 100_001)[1:]
        vals = np.array([b_of_eps(tp, e) for e in grid])
        j = int(np.argmin(vals))
        cell = grid[1] - grid[0]
        cells_off = abs(res.eps_star - grid[j]) / cell
        exact = res.eta_star * res.eps_star == tp.Lambda_m
        star, star_margin = continuous_bound(tp, res.eta_star, res.eps_star)
        rng = np.random.default_rng(11)
        others = []
        while len(others) < 20:
            eta, eps = 10 ** rng.uniform(-1, 3), 10 ** rng.uniform(-3, 1)
            val, margin = continuous_bound(tp, eta, eps)
            if margin > 0:
                others.append(val)
        beats = star_margin > 0 and star <= min(others)
    ok = cells_off <= 1 and exact and beats and tm.elapsed < 5.0
    report(5, "tuner", ok,
           f"eps*={res.eps_star:.6g} is {cells_off:.2f} cells from the 1e5-grid argmin; eta*eps* == Lambda_m: "
           f"{exact}; bound {star:.5g} <= min over 20 feasible pairs {min(others):.5g}; {tm.elapsed:.2f}s < 5s")
    assert ok


# ---------------------------------------------------------------- criterion 6

def test_criterion_06_catching_convergence(report):
    with Timer() as tm:
        beta, eta, eps, delta = 5.0, 1.0, 1.0, 0.6
        sc = build_scenario(scenario_config("quadratic-tracking", b_offset=0.5, g_offset=10.0))
        p = sc.problem
        z0 = PrimalDual([0.0], [0.0])

        def flow(t):
            # constraint inactive: x' = -beta (x - b(t)), b(t) = 0.5 + t, lambda = 0
            return PrimalDual([0.5 + t - 1 / beta + (-0.5 + 1 / beta) * np.exp(-beta * t)], [0.0])

        rows = refinement_ladder(p, z0, beta, eta, eps, Ts=(250, 500, 1000, 2000, 4000), exact=flow)
        gap_orders = observed_orders([r["gap"] for r in rows])
        res_orders = observed_orders([r["residual"] for r in rows])
        fine = refine_run(p, z0, beta, eta, eps, T=100_000)
        probes = np.linspace(0.0, 1.0, 1001)
        fz = fine.stacked_at(probes)
        sup_flow = float(np.max(np.abs(fz[:, 0] - [flow(t).x[0] for t in probes])))

        ref = kkt_trajectory(p, TimeGrid(1.0, 1000), sc.closed_form)
        c = constants(p, ref, CertificateInputs(delta, t_grid_count=9), eta)
        zs0 = sc.closed_form(0.0)
        e0 = eta_dist(z0.x - zs0.x, z0.lam - zs0.lam, eta)
        cb = gamma_and_continuous(c.Lambda_m, c.M_nc, c.M_lambda, c.sigma_eta, delta, beta, eta, eps, e0)
        curve = cb.curve(probes)
        kkt = np.array([np.concatenate([sc.closed_form(t).x, sc.closed_form(t).lam]) for t in probes])
        worst = -np.inf
        for T in (250, 500, 1000, 2000, 4000, 100_000):
            path = fine if T == 100_000 else refine_run(p, z0, beta, eta, eps, T=T)
            d = path.stacked_at(probes) - kkt
            err = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2 / eta)
            lip = float(np.max(np.abs(path.slopes())))
            tol = 10 * (1.0 / T) * beta * lip
            worst = max(worst, float(np.max(err - curve - tol)))
    ok = (np.all((gap_orders >= 0.8) & (gap_orders <= 1.2)) and np.all((res_orders >= 0.8) & (res_orders <= 1.2))
          and sup_flow <= 1e-3 and cb.margin > 0 and worst <= 0 and tm.elapsed < 60.0)
    report(6, "catching convergence", ok,
           f"gap orders {np.round(gap_orders, 3).tolist()}, residual orders {np.round(res_orders, 3).tolist()}; "
           f"sup distance to flow at T=1e5 {sup_flow:.2e} <= 1e-3; bound curve majorizes "
           f"(max excess {worst:.2e}); {tm.elapsed:.2f}s < 60s")
    assert ok


# ---------------------------------------------------------------- criterion 7

def test_criterion_07_sweeping(report):
    with Timer() as tm:
        p = sweeping_example()
        T = 1000
        path = refine_run(p, PrimalDual([0.0, 0.0], []), 1.0, 1.0, 1.0, T=T)
        dev = float(np.max(np.abs(path.xs[:, 0] - path.times)))
        second = float(np.max(np.abs(path.xs[:, 1])))
        res = inclusion_residual(path, p, 1.0, 1.0, 1.0)
    ok = dev <= 1.0 / T and second == 0.0 and res <= 1e-10 and tm.elapsed < 1.0
    report(7, "sweeping counterexample", ok,
           f"max |x1 - t| {dev:.1e} <= delta_T = {1.0 / T:g}; inclusion residual {res:.1e}; {tm.elapsed:.2f}s < 1s")
    assert ok


# ---------------------------------------------------------------- criterion 8

def test_criterion_08_isolation_keepout(report):
    with Timer() as tm:
        sc = build_scenario(scenario_config("keepout-disk", a_amp=0.1, a_freq=0.5))
        grid = TimeGrid(1.0, 100)
        eta = 1.0
        near = kkt_trajectory(sc.problem, grid, lambda t: keepout_geometric_kkt(sc, t, "near"))
        far = kkt_trajectory(sc.problem, grid, lambda t: keepout_geometric_kkt(sc, t, "far"))
        deltas = (0.05, 0.05)
        cn = constants(sc.problem, near, CertificateInputs(deltas[0]), eta)
        cf = constants(sc.problem, far, CertificateInputs(deltas[1]), eta)
        out = isolation_pair(cn, cf, near, far, eta)
    ok = out["certified"] and tm.elapsed < 30.0
    report(8, "isolation of two keepout-disk KKT trajectories", ok,
           f"margins {out['margins'][0]:.3f} (near), {out['margins'][1]:.3f} (far); Lambda_m {cn.Lambda_m:.3f}, "
           f"{cf.Lambda_m:.3f}; separation {out['separation']:.3f} vs delta1+delta2 = {sum(deltas):g}; "
           f"{tm.elapsed:.2f}s < 30s")
    assert ok


# ---------------------------------------------------------------- criterion 9

def test_criterion_09_feeder_surrogate(report):
    with Timer() as tm:
        sc = build_scenario(scenario_config("feeder-surrogate", n=6, T=2000))
        p = sc.problem
        grid = TimeGrid(p.horizon, 2000)
        ref = kkt_trajectory(p, grid, sc.seed_point)
        params = TrackerParams(0.04, 75000.0, 1e-5)
        traj = run(p, grid, params, ref.point(0), reference=ref)
        err = traj.error_eta[1:]
        steps = ref.step_norms(params.eta)
        corr = float(np.corrcoef(err, steps)[0, 1])
        times = grid.times()
        viol = np.array([np.linalg.norm(np.maximum(p.f(traj.xs[k], times[k]), 0.0)) for k in range(1, len(traj))])
        band = sc.extras["v_max"] - sc.extras["v_min"]
        mean_viol = float(np.mean(viol))
    ok = corr >= 0.5 and mean_viol <= 1e-2 * band and tm.elapsed < 120.0
    report(9, "feeder-surrogate qualitative behavior", ok,
           f"corr(error, trajectory speed) {corr:.3f} >= 0.5; mean violation {mean_viol:.2e} <= "
           f"{1e-2 * band:.1e}; mean error {np.mean(err):.3g}, mean step {np.mean(steps):.3g}; {tm.elapsed:.1f}s < 120s")
    assert ok


# ---------------------------------------------------------------- criterion 10

def test_criterion_10_derivative_checks(report):
    with Timer() as tm:
        worst = {}
        for name in SCENARIO_NAMES:
            rep = check_derivatives(build_scenario(scenario_config(name)).problem, samples=20, seed=0)
            worst[name] = max(rep.values())
        worst["sweeping"] = max(check_derivatives(sweeping_example(), samples=20, seed=0).values())
    top = max(worst.values())
    ok = top <= 1e-5 and tm.elapsed < 5.0
    report(10, "derivative self-checks", ok,
           f"max relative error {top:.1e} <= 1e-5 over {', '.join(worst)}; {tm.elapsed:.2f}s < 5s")
    assert ok
