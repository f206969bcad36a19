"""
Command line entry point.

    kkt-tracker scenarios
    kkt-tracker oracle    --config cfg.json --out dir
    kkt-tracker track     --config cfg.json --out dir [--delta D]
    kkt-tracker certify   --config cfg.json --out dir [--delta D]
    kkt-tracker tune      --config cfg.json --out dir [--delta D]
    kkt-tracker catching  --config cfg.json --out dir [--refinements K]

Exit status: 0 success, 1 numerical failure, 2 configuration error.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from kkt_tracker.catching import (inclusion_residual, observed_orders, refine_run, refinement_gap,
                                  write_ladder_csv, write_path_csv)
from kkt_tracker.certificates import (CertificateInputs, bounds_discrete, certify,
                                      constants, feasibility_discrete, rho_kappa)
from kkt_tracker.core import PrimalDual
from kkt_tracker.exceptions import BoundNotApplicableError, InvalidInputError, KKTTrackerError
from kkt_tracker.kkt_oracle import kkt_trajectory
from kkt_tracker.problem import TimeGrid
from kkt_tracker.scenarios import SCENARIO_NAMES, _REGISTRY, build_scenario, scenario_config
from kkt_tracker.tracker import TrackerParams, run
from kkt_tracker.tuner import TunerProblem, tune

__all__ = ["main", "load_config", "ConfigError", "ExperimentConfig"]


class ConfigError(Exception):
    """Invalid configuration; the message starts with the offending field."""


_TOP_KEYS = {"scenario", "scenario_params", "T", "params", "seed", "z0", "certificates", "tuner",
             "catching", "oracle"}
_SECTIONS = {
    "params": {"alpha", "eta", "epsilon", "lambda_prior", "beta"},
    "certificates": {"delta", "t_grid_count", "dir_count", "radius_count", "quadrature_nodes",
                     "refine_steps", "inflation"},
    "tuner": {"beta", "tol"},
    "catching": {"beta", "eta", "epsilon", "T_base", "refinements", "probe_count"},
    "oracle": {"tol", "max_iter"},
    "z0": {"x", "lambda"},
}
_DEFAULTS = {
    "certificates": {"delta": 0.5, "t_grid_count": 9, "dir_count": 4, "radius_count": 2,
                     "quadrature_nodes": 8, "refine_steps": 5, "inflation": 1.1},
    "tuner": {"tol": 1e-8},
    "catching": {"T_base": 250, "refinements": 4, "probe_count": 1001},
    "oracle": {"tol": None, "max_iter": 200000},
}


@dataclasses.dataclass
class ExperimentConfig:
    scenario: str
    scenario_params: dict
    T: int
    params: dict
    seed: int
    z0: dict
    certificates: dict
    tuner: dict
    catching: dict
    oracle: dict


def _positive(section, key, value, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value) and value > 0
    if integer:
        ok = ok and float(value).is_integer()
    if not ok:
        kind = "a positive integer" if integer else "a positive number"
        field = key if section is None else f"{section}.{key}"
        raise ConfigError(f"{field}: must be {kind}, got {value!r}")


def validate_config(raw):
    """Check a parsed JSON object and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    if "scenario" not in raw:
        raise ConfigError("scenario: required field is missing")
    if raw["scenario"] not in SCENARIO_NAMES:
        raise ConfigError(f"scenario: unknown scenario {raw['scenario']!r}; choose from {', '.join(SCENARIO_NAMES)}")
    if "T" not in raw:
        raise ConfigError("T: required field is missing")
    _positive(None, "T", raw["T"], integer=True)
    seed = raw.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64):
        raise ConfigError(f"seed: must be an integer in [0, 2^64), got {seed!r}")
    sp = raw.get("scenario_params", {})
    if not isinstance(sp, dict):
        raise ConfigError("scenario_params: must be an object")
    allowed = {f.name for f in dataclasses.fields(_REGISTRY[raw["scenario"]][0])}
    bad = sorted(set(sp) - allowed)
    if bad:
        raise ConfigError(f"scenario_params.{bad[0]}: unknown key for {raw['scenario']}")
    sections = {}
    for name, keys in _SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: must be an object")
        bad = sorted(set(sec) - keys)
        if bad:
            raise ConfigError(f"{name}.{bad[0]}: unknown key")
        merged = dict(_DEFAULTS.get(name, {}))
        merged.update(sec)
        sections[name] = merged
    p = sections["params"]
    for key in ("alpha", "eta", "epsilon", "beta"):
        if key in p:
            _positive("params", key, p[key])
    if "lambda_prior" in p:
        lp = p["lambda_prior"]
        if not (isinstance(lp, list) and all(isinstance(v, (int, float)) and v >= 0 for v in lp)):
            raise ConfigError("params.lambda_prior: must be a list of nonnegative numbers")
    if {"alpha", "eta", "epsilon"} <= set(p) and not p["eta"] * p["alpha"] * p["epsilon"] < 1:
        raise ConfigError("params.epsilon: eta*alpha*epsilon must be below 1")
    for key in ("delta", "inflation"):
        _positive("certificates", key, sections["certificates"][key])
    if sections["certificates"]["inflation"] < 1:
        raise ConfigError("certificates.inflation: must be at least 1")
    for key in ("t_grid_count", "radius_count", "quadrature_nodes"):
        _positive("certificates", key, sections["certificates"][key], integer=True)
    for key in ("dir_count", "refine_steps"):
        v = sections["certificates"][key]
        if not (isinstance(v, int) and not isinstance(v, bool) and v >= 0):
            raise ConfigError(f"certificates.{key}: must be a nonnegative integer")
    for key in ("beta", "eta", "epsilon"):
        if key in sections["catching"]:
            _positive("catching", key, sections["catching"][key])
    _positive("catching", "T_base", sections["catching"]["T_base"], integer=True)
    _positive("catching", "probe_count", sections["catching"]["probe_count"], integer=True)
    r = sections["catching"]["refinements"]
    if not (isinstance(r, int) and not isinstance(r, bool) and 1 <= r <= 12):
        raise ConfigError("catching.refinements: must be an integer in [1, 12]")
    if "beta" in sections["tuner"]:
        _positive("tuner", "beta", sections["tuner"]["beta"])
    _positive("tuner", "tol", sections["tuner"]["tol"])
    if sections["oracle"]["tol"] is not None:
        _positive("oracle", "tol", sections["oracle"]["tol"])
    _positive("oracle", "max_iter", sections["oracle"]["max_iter"], integer=True)
    return ExperimentConfig(scenario=raw["scenario"], scenario_params=dict(sp), T=int(raw["T"]),
                            params=p, seed=int(seed), **{k: sections[k] for k in
                                                         ("z0", "certificates", "tuner", "catching", "oracle")})


def load_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate_config(raw)


# --------------------------------------------------------------------------


def _num(v):
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def _dump_json(obj, path):
    text = json.dumps(_finite(obj), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _finite(v):
    if isinstance(v, dict):
        return {str(k): _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    return v


def _build(cfg):
    sp = dict(cfg.scenario_params)
    if cfg.scenario == "feeder-surrogate":
        sp.setdefault("T", cfg.T)
        sp.setdefault("seed", cfg.seed)
    try:
        sc = build_scenario(scenario_config(cfg.scenario, **sp))
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"scenario_params: {exc}") from None
    return sc, TimeGrid(sc.problem.horizon, cfg.T)


def _params(cfg, m):
    p = cfg.params
    missing = [k for k in ("alpha", "eta", "epsilon") if k not in p]
    if missing:
        raise ConfigError(f"params.{missing[0]}: required for this command")
    lp = p.get("lambda_prior")
    if lp is not None and len(lp) != m:
        raise ConfigError(f"params.lambda_prior: expected {m} entries")
    return TrackerParams(p["alpha"], p["eta"], p["epsilon"], lp, p.get("beta"))


def _seed_point(sc, t):
    if sc.seed_point is None:
        raise ConfigError("scenario: no seed point available")
    return sc.seed_point(t)


def _oracle(cfg, sc, grid):
    o = cfg.oracle
    return kkt_trajectory(sc.problem, grid, _seed_point(sc, 0.0), tol=o["tol"], max_iter=int(o["max_iter"]))


def _z0(cfg, sc, ref):
    if cfg.z0:
        x = cfg.z0.get("x")
        lam = cfg.z0.get("lambda", [0.0] * sc.problem.m)
        if x is None or len(x) != sc.problem.n or len(lam) != sc.problem.m:
            raise ConfigError(f"z0: needs x of length {sc.problem.n} and lambda of length {sc.problem.m}")
        try:
            return PrimalDual(x, lam)
        except InvalidInputError as exc:
            raise ConfigError(f"z0.lambda: {exc}") from None
    return ref.point(0)


def _cert_inputs(cfg, delta=None):
    c = dict(cfg.certificates)
    if delta is not None:
        c["delta"] = delta
    return CertificateInputs(c["delta"], int(c["t_grid_count"]), int(c["dir_count"]), int(c["radius_count"]),
                             int(c["quadrature_nodes"]), cfg.seed, int(c["refine_steps"]), float(c["inflation"]))


def _points_header(n, m):
    return [f"x_{i + 1}" for i in range(n)] + [f"lambda_{j + 1}" for j in range(m)]


def cmd_scenarios(args):
    for name in SCENARIO_NAMES:
        cls = _REGISTRY[name][0]
        fields = ", ".join(f.name for f in dataclasses.fields(cls))
        print(f"{name}: {fields}")
    return 0


def cmd_oracle(cfg, args):
    sc, grid = _build(cfg)
    ref = _oracle(cfg, sc, grid)
    eta = cfg.params.get("eta", 1.0)
    steps = np.concatenate([[np.nan], ref.step_norms(eta)])
    with open(os.path.join(args.out, "oracle.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "t"] + _points_header(ref.n, ref.m) + ["kkt_residual", "step_eta"])
        times = grid.times()
        for k in range(len(ref)):
            w.writerow([k, _num(times[k])] + [_num(v) for v in ref.xs[k]] + [_num(v) for v in ref.lams[k]]
                       + [_num(ref.kkt_residual[k]), _num(steps[k])])
    _dump_json({"scenario": cfg.scenario, "T": cfg.T, "max_kkt_residual": float(np.max(ref.kkt_residual)),
                "mean_step_eta": float(np.mean(steps[1:])) if cfg.T else 0.0, "eta": eta,
                "jumps": ref.flags["jumps"]}, os.path.join(args.out, "oracle_summary.json"))
    return 0


def cmd_track(cfg, args):
    sc, grid = _build(cfg)
    params = _params(cfg, sc.problem.m)
    ref = _oracle(cfg, sc, grid)
    z0 = _z0(cfg, sc, ref)
    traj = run(sc.problem, grid, params, z0, reference=ref, residual=True)
    eta = params.eta
    bound_info = {"applicable": False}
    bound_col = np.full(len(traj), np.nan)
    if cfg.T >= 1:
        inputs = _cert_inputs(cfg, args.delta)
        const = constants(sc.problem, ref, inputs, eta, params.lambda_prior).inflated(inputs.inflation)
        _, rho, kappa = rho_kappa(const, params.alpha, eta, params.epsilon)
        z0_err = float(np.sqrt(np.sum((traj.xs[0] - ref.xs[1]) ** 2) + np.sum((traj.lams[0] - ref.lams[1]) ** 2) / eta))
        feas = feasibility_discrete(rho, kappa, const.delta, params.alpha, eta, params.epsilon, const.sigma_eta,
                                    grid.delta_T, const.M_lambda)
        bound_info = {"rho": rho, "kappa": kappa, "delta": const.delta, "margin_discrete": feas.margin,
                      "applicable": False}
        try:
            per, eventual = bounds_discrete(rho, kappa, const.delta, params.alpha, eta, params.epsilon,
                                            const.sigma_eta, grid.delta_T, const.M_lambda, z0_err,
                                            np.arange(1, cfg.T + 1))
            bound_col[1:] = per
            bound_info.update({"applicable": True, "eventual_discrete": eventual})
        except BoundNotApplicableError as exc:
            bound_info["reason"] = str(exc)
    times = grid.times()
    with open(os.path.join(args.out, "trajectory.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "t"] + _points_header(traj.n, traj.m) + ["err_eta", "kkt_residual", "bound"])
        for k in range(len(traj)):
            w.writerow([k, _num(times[k])] + [_num(v) for v in traj.xs[k]] + [_num(v) for v in traj.lams[k]]
                       + [_num(traj.error_eta[k]), _num(traj.kkt_residual[k]), _num(bound_col[k])])
    err = traj.error_eta[1:]
    ref_norm = np.sqrt(np.sum(ref.xs[1:] ** 2, axis=1) + np.sum(ref.lams[1:] ** 2, axis=1) / eta)
    viol = np.array([np.linalg.norm(np.maximum(sc.problem.f(traj.xs[k], times[k]), 0.0))
                     for k in range(1, len(traj))]) if sc.problem.m else np.zeros(len(err))
    steps = ref.step_norms(eta)
    summary = {
        "scenario": cfg.scenario, "T": cfg.T, "seed": cfg.seed,
        "params": {"alpha": params.alpha, "eta": eta, "epsilon": params.epsilon},
        "mean_err_eta": float(np.mean(err)) if err.size else 0.0,
        "max_err_eta": float(np.max(err)) if err.size else 0.0,
        "mean_relative_error": float(np.mean(err / np.maximum(ref_norm, 1e-300))) if err.size else 0.0,
        "mean_step_eta": float(np.mean(steps)) if steps.size else 0.0,
        "mean_violation": float(np.mean(viol)) if viol.size else 0.0,
        "max_oracle_residual": float(np.max(ref.kkt_residual)),
        "bound": bound_info,
        "flags": traj.flags,
    }
    if err.size > 2 and np.std(err) > 0 and np.std(steps) > 0:
        summary["corr_err_step"] = float(np.corrcoef(err, steps)[0, 1])
    _dump_json(summary, os.path.join(args.out, "summary.json"))
    return 0


def cmd_certify(cfg, args, with_tuner=False):
    sc, grid = _build(cfg)
    params = _params(cfg, sc.problem.m)
    ref = _oracle(cfg, sc, grid)
    inputs = _cert_inputs(cfg, args.delta)
    beta = cfg.tuner.get("beta", params.beta)
    report = certify(sc.problem, ref, inputs, params.alpha, params.eta, params.epsilon, beta=beta,
                     lambda_prior=params.lambda_prior)
    if with_tuner:
        if beta is None:
            raise ConfigError("tuner.beta: required for tune")
        raw = constants(sc.problem, ref, inputs, params.eta, params.lambda_prior).inflated(inputs.inflation)
        res = tune(TunerProblem.from_constants(raw, beta), tol=cfg.tuner["tol"])
        out = report.to_dict()
        out["tuner"] = res.as_dict()
        _dump_json(out, os.path.join(args.out, "tuner.json"))
    else:
        _dump_json(report.to_dict(), os.path.join(args.out, "certificate.json"))
    return 0


def cmd_catching(cfg, args):
    sc, grid = _build(cfg)
    c = cfg.catching
    p = cfg.params
    beta = c.get("beta", p.get("beta"))
    eta = c.get("eta", p.get("eta"))
    eps = c.get("epsilon", p.get("epsilon"))
    for key, v in (("beta", beta), ("eta", eta), ("epsilon", eps)):
        if v is None:
            raise ConfigError(f"catching.{key}: required for catching")
    refinements = args.refinements if args.refinements is not None else c["refinements"]
    if refinements < 1:
        raise ConfigError("catching.refinements: must be at least 1")
    Ts = [int(c["T_base"]) * 2 ** k for k in range(refinements + 1)]
    z0 = _seed_point(sc, 0.0) if not cfg.z0 else _z0(cfg, sc, None)
    lp = p.get("lambda_prior")
    paths = [refine_run(sc.problem, z0, beta, eta, eps, lp, T) for T in Ts]
    rows = []
    for i, (T, path) in enumerate(zip(Ts, paths)):
        rows.append({"T": T, "delta_T": sc.problem.horizon / T,
                     "gap": refinement_gap(path, paths[i + 1], c["probe_count"], eta) if i + 1 < len(paths) else None,
                     "residual": inclusion_residual(path, sc.problem, beta, eta, eps, lp)})
    write_ladder_csv(rows, os.path.join(args.out, "ladder.csv"))
    write_path_csv(paths[-1], os.path.join(args.out, "path.csv"))
    gaps = [r["gap"] for r in rows]
    res = [r["residual"] for r in rows]
    _dump_json({"Ts": Ts, "gap_orders": [float(v) for v in observed_orders(gaps)] if len(Ts) > 2 else [],
                "residual_orders": [float(v) for v in observed_orders(res)] if min(res) > 0 else []},
               os.path.join(args.out, "catching_summary.json"))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="kkt-tracker", description=__doc__.strip().splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("track", "oracle", "certify", "tune", "catching", "scenarios"):
        sp = sub.add_parser(name)
        if name == "scenarios":
            continue
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=".")
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--refinements", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        return cmd_scenarios(args)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed: must lie in [0, 2^64)")
            cfg.seed = args.seed
        if args.delta is not None and not (np.isfinite(args.delta) and args.delta > 0):
            raise ConfigError("certificates.delta: --delta must be positive")
        os.makedirs(args.out, exist_ok=True)
        handler = {"track": cmd_track, "oracle": cmd_oracle, "certify": cmd_certify,
                   "catching": cmd_catching,
                   "tune": lambda c, a: cmd_certify(c, a, with_tuner=True)}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KKTTrackerError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
