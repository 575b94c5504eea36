"""Command-line experiment driver.

Subcommands ``simulate``, ``floquet``, ``sweep`` and ``check`` read one JSON
config file (schema in ``CONFIG_SCHEMA``) and write CSV or JSON to ``--out``
or stdout.  Exit codes: 0 success, 1 usage/config error, 2 numerical
failure, 3 threshold failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np

from . import expr
from .errors import ExprError, HamstabError, IntegrationError, OrbitError, ProjectionError
from .experiments import identity_violations, mean_rates, sample_box, stabilization_run
from .fields import ScalarField, SystemDef, hamiltonian_field
from .integrate import IntegratorConfig, integrate
from .orbits import (find_periodic_orbit, floquet_analysis, offset_from_orbit,
                     orbit_distance)
from .perturbation import Mode, PerturbationSpec, build_perturbed_field
from .systems import BUILTINS, builtin

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 1, 2, 3

DEFAULT_THRESHOLDS = {
    "closure": 1e-6,
    "multiplier": 1e-3,
    "identity": 1e-10,
    "preserve": 1e-12,
    "decay_fit": 0.1,
    "distance": 1e-6,
}

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_num_or_expr = {"type": ["number", "string"]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["system", "fiber"],
    "additionalProperties": False,
    "properties": {
        "system": {
            "oneOf": [
                {"type": "object", "required": ["builtin"], "additionalProperties": False,
                 "properties": {"builtin": {"enum": sorted(BUILTINS)},
                                "params": {"type": "object",
                                           "additionalProperties": {"type": "number"}}}},
                {"type": "object", "required": ["H", "C"], "additionalProperties": False,
                 "properties": {"nu": _num_or_expr, "H": {"type": "string"},
                                "C": {"type": "string"}, "name": {"type": "string"},
                                "params": {"type": "object",
                                           "additionalProperties": {"type": "number"}}}},
            ]
        },
        "fiber": {
            "oneOf": [
                {"type": "object", "required": ["h", "c"], "additionalProperties": False,
                 "properties": {"h": {"type": "number"}, "c": {"type": "number"},
                                "guess": _vec3}},
                {"type": "object", "required": ["seed"], "additionalProperties": False,
                 "properties": {"seed": _vec3}},
            ]
        },
        "perturbation": {
            "type": "object", "additionalProperties": False,
            "properties": {"mode": {"enum": [m.value for m in Mode] + ["None"]},
                           "alpha": _num_or_expr, "beta": _num_or_expr},
        },
        "integrator": {
            "type": "object", "additionalProperties": False,
            "properties": {"method": {"enum": ["rk4", "rk45", "dop853"]},
                           "rtol": {"type": "number", "exclusiveMinimum": 0},
                           "atol": {"type": "number", "exclusiveMinimum": 0},
                           "step": {"type": "number", "exclusiveMinimum": 0},
                           "max_step": {"type": "number", "exclusiveMinimum": 0},
                           "max_steps": {"type": "integer", "minimum": 1}},
        },
        "run": {
            "type": "object", "additionalProperties": False,
            "properties": {"t_end": {"type": "number", "minimum": 0},
                           "initial": _vec3,
                           "offset": {"type": "number", "minimum": 0},
                           "orbit": {"type": "boolean"},
                           "dt": {"type": "number", "exclusiveMinimum": 0},
                           "efolds": {"type": "number", "exclusiveMinimum": 0}},
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "alpha_scale": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "offset": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "fiber": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                     "minItems": 2, "maxItems": 2}},
            },
        },
        "check": {
            "type": "object", "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 1},
                           "box": {"type": "array", "minItems": 3, "maxItems": 3,
                                   "items": {"type": "array", "items": {"type": "number"},
                                             "minItems": 2, "maxItems": 2}}},
        },
        "thresholds": {"type": "object",
                       "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                                      for k in DEFAULT_THRESHOLDS},
                       "additionalProperties": False},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(Exception):
    """Invalid config file or command-line override."""


# ---------------------------------------------------------------- config


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno <= len(text.splitlines()) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n  {line}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def _scalar(value, params, name) -> ScalarField:
    if isinstance(value, (int, float)):
        return ScalarField.constant(float(value), name=name)
    return expr.compile_expr(value, params)


def build_system(cfg: dict) -> SystemDef:
    s = cfg["system"]
    params = dict(s.get("params", {}))
    if "builtin" in s:
        try:
            return builtin(s["builtin"], **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for builtin {s['builtin']!r}: {exc}") from None
    try:
        nu = _scalar(s.get("nu", 1.0), params, "nu")
        H = expr.compile_expr(s["H"], params)
        C = expr.compile_expr(s["C"], params)
    except ExprError as exc:
        raise ConfigError(f"expression error: {exc}") from None
    return SystemDef(nu, H, C, name=s.get("name", "expression"), params=params)


def fiber_values(cfg: dict, system: SystemDef):
    """``(h, c, guess)``: a seed fills ``h = H(seed)``, ``c = C(seed)``."""
    f = cfg["fiber"]
    if "seed" in f:
        seed = np.array(f["seed"], dtype=float)
        return float(system.H.eval(seed)), float(system.C.eval(seed)), seed
    guess = np.array(f["guess"], dtype=float) if "guess" in f else None
    return float(f["h"]), float(f["c"]), guess


def build_spec(cfg: dict, sys: SystemDef, h: float, c: float, alpha_scale: float = 1.0):
    p = cfg.get("perturbation", {})
    mode = p.get("mode", Mode.FULL_STABILIZE.value)
    if mode == "None":
        return None
    params = dict(cfg["system"].get("params", {}))
    try:
        alpha = _scalar(p.get("alpha", 1.0), params, "alpha").scaled(alpha_scale)
        beta = _scalar(p.get("beta", 1.0), params, "beta").scaled(alpha_scale)
    except ExprError as exc:
        raise ConfigError(f"expression error: {exc}") from None
    return PerturbationSpec(sys, h, c, Mode(mode), alpha, beta)


def integrator_config(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(**cfg.get("integrator", {}))
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None


def thresholds(cfg: dict, overrides) -> dict:
    out = dict(DEFAULT_THRESHOLDS)
    out.update(cfg.get("thresholds", {}))
    for item in overrides or []:
        name, sep, value = item.partition("=")
        if not sep or name not in DEFAULT_THRESHOLDS:
            raise ConfigError(f"bad --threshold {item!r}; use NAME=VALUE with NAME in "
                              f"{sorted(DEFAULT_THRESHOLDS)}")
        try:
            out[name] = float(value)
        except ValueError:
            raise ConfigError(f"bad --threshold value {value!r}") from None
    return out


def _orbit_for(cfg, sys, h, c, guess, thr):
    if guess is None:
        raise ConfigError("orbit finding needs fiber.seed or fiber.guess")
    return find_periodic_orbit(sys, h, c, guess, closure_tol=thr["closure"])


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

SIM_COLUMNS = ["t", "x", "y", "z", "H", "C", "H_err", "C_err", "dist_to_orbit"]


def cmd_simulate(cfg: dict, args, thr: dict) -> tuple[str, int]:
    system = build_system(cfg)
    h, c, guess = fiber_values(cfg, system)
    spec = build_spec(cfg, system, h, c)
    run = cfg.get("run", {})
    want_orbit = run.get("orbit", False) or "offset" in run
    orbit = _orbit_for(cfg, system, h, c, guess, thr) if want_orbit else None
    if "initial" in run:
        u0 = np.array(run["initial"], dtype=float)
    elif orbit is not None:
        u0 = orbit.anchor
        if run.get("offset", 0.0) > 0:
            u0 = offset_from_orbit(orbit, spec.mode if spec else Mode.FULL_STABILIZE, run["offset"])
    elif guess is not None:
        u0 = guess
    else:
        raise ConfigError("simulate needs run.initial, fiber.seed or fiber.guess")
    field = hamiltonian_field(system) if spec is None else build_perturbed_field(spec)
    t_end = float(run.get("t_end", 10.0))
    icfg = integrator_config(cfg)
    if "dt" in run and t_end > 0:
        # restart at each output time so every row is an integrator node
        n = int(math.floor(t_end / run["dt"] + 1e-9))
        times = np.arange(n + 1) * run["dt"]
        if times[-1] < t_end:
            times = np.append(times, t_end)
        states = [np.asarray(u0, dtype=float)]
        for ta, tb in zip(times[:-1], times[1:]):
            states.append(integrate(field, states[-1], tb - ta, icfg).final)
    else:
        traj = integrate(field, u0, t_end, icfg)
        times, states = traj.times, traj.states
    rows = []
    for t, u in zip(times, states):
        Hv, Cv = system.H.eval(u), system.C.eval(u)
        d = orbit_distance(orbit, u) if orbit is not None else None
        rows.append([float(t), *map(float, u), Hv, Cv, Hv - h, Cv - c, d])
    return _csv(SIM_COLUMNS, rows), EXIT_OK


def cmd_floquet(cfg: dict, args, thr: dict) -> tuple[str, int]:
    system = build_system(cfg)
    h, c, guess = fiber_values(cfg, system)
    spec = build_spec(cfg, system, h, c)
    if spec is None:
        raise ConfigError("floquet needs a perturbation mode")
    orbit = _orbit_for(cfg, system, h, c, guess, thr)
    report = floquet_analysis(spec, orbit)
    fl = report.to_dict(thr["multiplier"])
    out = {"system": system.name, "orbit": orbit.summary(), "floquet": fl,
           "thresholds": thr, "pass": fl["match"]}
    return _json(out), EXIT_OK if fl["match"] else EXIT_THRESHOLD


SWEEP_COLUMNS = ["alpha_scale", "offset", "h", "c", "period", "multiplier_1", "multiplier_2",
                 "multiplier_3", "predicted_rate", "fitted_rate", "final_distance", "pass", "error"]


def sweep_row(cfg: dict, alpha_scale: float, offset: float, fiber, thr: dict) -> list:
    """One sweep run, rebuilt from the plain config so it can run in a worker."""
    system = build_system(cfg)
    h, c, guess = fiber_values(cfg, system)
    if fiber is not None:
        h, c = fiber
    row = [alpha_scale, offset, h, c]
    try:
        spec = build_spec(cfg, system, h, c, alpha_scale)
        if spec is None:
            raise ConfigError("sweep needs a perturbation mode")
        orbit = _orbit_for(cfg, system, h, c, guess, thr)
        rep = floquet_analysis(spec, orbit)
        mults = [abs(z) for z in rep.computed]
        ok = rep.matches(thr["multiplier"])
        fitted = final = math.nan
        lh, lc = mean_rates(spec, orbit)
        pred = lh if spec.mode.c_term_sign else lc
        if spec.mode.stabilizing:
            efolds = cfg.get("run", {}).get("efolds", 30.0)
            res = stabilization_run(spec, orbit, offset, efolds=efolds)
            fitted, final = res.fitted_rate, res.final_distance
            ok = ok and abs(fitted - pred) <= thr["decay_fit"] * abs(pred)
        return row + [orbit.period, *mults, pred, fitted, final, ok, ""]
    except (HamstabError, ValueError, RuntimeError, ConfigError) as exc:
        return row + [None] * 7 + [False, f"{type(exc).__name__}: {exc}"]


def _sweep_job(payload):
    return sweep_row(*payload)


def cmd_sweep(cfg: dict, args, thr: dict) -> tuple[str, int]:
    sw = cfg.get("sweep", {})
    run = cfg.get("run", {})
    scales = sw.get("alpha_scale", [1.0])
    offsets = sw.get("offset", [run.get("offset", 1e-3)])
    fibers = [tuple(f) for f in sw["fiber"]] if "fiber" in sw else [None]
    grid = list(itertools.product(scales, offsets, fibers))
    jobs = [(cfg, a, o, f, thr) for a, o, f in grid]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    all_pass = all(r[-2] for r in rows)
    return _csv(SWEEP_COLUMNS, rows), EXIT_OK if all_pass else EXIT_THRESHOLD


def cmd_check(cfg: dict, args, thr: dict) -> tuple[str, int]:
    system = build_system(cfg)
    h, c, _ = fiber_values(cfg, system)
    spec = build_spec(cfg, system, h, c)
    if spec is None:
        raise ConfigError("check needs a perturbation mode")
    ck = cfg.get("check", {})
    seed = cfg.get("seed", 0)
    pts = sample_box(ck.get("n", 1000), ck.get("box", [[-2, 2]] * 3), seed)
    beta = None
    if cfg["system"].get("builtin") == "rikitake":
        beta = float(cfg["system"].get("params", {}).get("beta", 1.0))
    viol = identity_violations(spec, pts, beta)
    limits = {"preserve_H": thr["preserve"], "preserve_C": thr["preserve"],
              "decay_H": thr["identity"], "decay_C": thr["identity"],
              "rikitake_c_term": thr["identity"], "rikitake_h_term": thr["identity"]}
    checks = {k: {"max_violation": v, "threshold": limits[k], "pass": v <= limits[k]}
              for k, v in viol.items() if k in limits}
    ok = all(ch["pass"] for ch in checks.values())
    out = {"system": system.name, "mode": spec.mode.value, "seed": seed,
           "n_points": viol["n_points"], "n_valid": viol["n_valid"],
           "degenerate": viol["degenerate"], "checks": checks, "pass": ok}
    if viol["degenerate"]:
        out["note"] = "every sampled point is an equilibrium; identities hold trivially"
    return _json(out), EXIT_OK if ok else EXIT_THRESHOLD


COMMANDS = {"simulate": cmd_simulate, "floquet": cmd_floquet, "sweep": cmd_sweep,
            "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamstab",
        description="Stabilize or destabilize periodic orbits of 3D Hamiltonian systems "
                    "and check the predicted Floquet multipliers.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"simulate": "integrate one run and write a trajectory CSV",
             "floquet": "find the orbit and compare monodromy eigenvalues with the prediction",
             "sweep": "run a grid of alpha scales, offsets and fibers; one CSV row per run",
             "check": "sample pointwise identities in a box"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--seed", type=int, help="override the sampling seed")
        p.add_argument("--threshold", action="append", metavar="NAME=VALUE",
                       help=f"override a threshold; names: {', '.join(DEFAULT_THRESHOLDS)}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg["seed"] = args.seed
        thr = thresholds(cfg, args.threshold)
        text, code = COMMANDS[args.command](cfg, args, thr)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OrbitError, ProjectionError, HamstabError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
