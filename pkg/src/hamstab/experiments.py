"""Numerical experiments shared by the CLI and the acceptance suite:
pointwise identity sweeps, stabilization/destabilization runs from an offset
and the planar decay-rate fit."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, _cross
from .integrate import IntegratorConfig, Trajectory, integrate
from .orbits import (PeriodicOrbit, fit_exponential_rate, offset_from_orbit, orbit_distance,
                     orbit_integral, phase_align, project_to_level, window_maxima)
from .perturbation import (PerturbationSpec, _c_term_parts, _h_term_parts, build_perturbed_field,
                           decay_rates, planar_perturbed_field)

__all__ = [
    "sample_box",
    "identity_violations",
    "rikitake_c_term_oracle",
    "rikitake_h_term_oracle",
    "RunResult",
    "StabilizationResult",
    "DestabilizationResult",
    "run_cfg",
    "mean_rates",
    "stabilization_run",
    "destabilization_run",
    "planar_decay_fit",
]


def sample_box(n: int, box, seed: int) -> np.ndarray:
    """``n`` uniform points in the axis-aligned ``box = [[lo, hi]] * 3``."""
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, box.shape[0]))


def rikitake_c_term_oracle(u, beta, h, alpha=1.0):
    """Componentwise C-preserving term for Rikitake (hand expansion)."""
    x, y, z = u
    b = beta
    H = 0.25 * (-x * x + y * y) - b * z
    v = np.array([x * (-y * y - 2 * z * z + 2 * b * z),
                  y * (x * x + 2 * z * z + 2 * b * z),
                  z * (x * x - y * y) - b * (x * x + y * y)])
    return -alpha * (H - h) * v


def rikitake_h_term_oracle(u, beta, c, gain=1.0):
    """Componentwise H-preserving term for Rikitake (hand expansion)."""
    x, y, z = u
    b = beta
    C = 0.5 * (x * x + y * y) + z * z
    v = np.array([x * (-y * y / 2 + b * z - b * b),
                  y * (-x * x / 2 - b * z - b * b),
                  0.5 * (-z * (x * x + y * y) + b * (x * x - y * y))])
    return gain * (C - c) * v


def identity_violations(spec: PerturbationSpec, points, rikitake_beta: float | None = None,
                        degenerate_tol: float = 1e-8) -> dict:
    """Maximum relative violations of the pointwise identities over ``points``.

    Each residual is divided by the magnitude of the terms that cancel in
    it, so a value near machine epsilon means exact cancellation.  Points
    where ``|grad H x grad C| <= degenerate_tol |grad H| |grad C|`` are
    skipped as (near-)equilibria.
    """
    sys = spec.sys
    mode = spec.mode
    Y = build_perturbed_field(spec)
    rates = decay_rates(spec)
    out = {}
    keys = []
    if mode.c_term_sign:
        keys.append("decay_H")
    else:
        keys.append("preserve_H")
    if mode.h_term_sign:
        keys.append("decay_C")
    else:
        keys.append("preserve_C")
    if rikitake_beta is not None:
        if mode.c_term_sign:
            keys.append("rikitake_c_term")
        if mode.h_term_sign:
            keys.append("rikitake_h_term")
    for k in keys:
        out[k] = 0.0
    if mode.c_term_sign:
        cterm, _ = _c_term_parts(sys, spec.h, spec.alpha, mode.c_term_sign)
    if mode.h_term_sign:
        hterm, _ = _h_term_parts(sys, spec.c, spec.h_gain, mode.h_term_sign)
    n_valid = 0
    for u in np.asarray(points, dtype=float):
        g, k = sys.H.grad(u), sys.C.grad(u)
        ng, nk = float(np.linalg.norm(g)), float(np.linalg.norm(k))
        w = _cross(g, k)
        if ng * nk == 0 or np.linalg.norm(w) <= degenerate_tol * ng * nk:
            continue
        n_valid += 1
        y = Y.eval(u)
        nu = abs(sys.nu.eval(u))
        dh, dc = sys.H.eval(u) - spec.h, sys.C.eval(u) - spec.c
        ca = abs(spec.alpha.eval(u) * dh) if mode.c_term_sign else 0.0
        cb = abs(spec.h_gain.eval(u) * dc) if mode.h_term_sign else 0.0
        # size of the cancelling contributions in <Y, grad H> and <Y, grad C>
        sh = nu * ng * ng * nk + ca * ng * ng * nk * nk + cb * ng ** 3 * nk
        sc = nu * ng * nk * nk + ca * ng * nk ** 3 + cb * ng * ng * nk * nk
        rh = float(y @ g) - rates.lambda_H(u) * dh
        rc = float(y @ k) - rates.lambda_C(u) * dc
        out[keys[0]] = max(out[keys[0]], abs(rh) / sh)
        out[keys[1]] = max(out[keys[1]], abs(rc) / sc)
        if "rikitake_c_term" in out:
            ref = rikitake_c_term_oracle(u, rikitake_beta, spec.h, mode.c_term_sign * spec.alpha.eval(u))
            err = np.linalg.norm(cterm(u) - ref) / max(ca * ng * nk * nk, 1e-300)
            out["rikitake_c_term"] = max(out["rikitake_c_term"], float(err) if ca else 0.0)
        if "rikitake_h_term" in out:
            ref = rikitake_h_term_oracle(u, rikitake_beta, spec.c, mode.h_term_sign * spec.h_gain.eval(u))
            err = np.linalg.norm(hterm(u) - ref) / max(cb * ng * ng * nk, 1e-300)
            out["rikitake_h_term"] = max(out["rikitake_h_term"], float(err) if cb else 0.0)
    out["n_points"] = int(len(points))
    out["n_valid"] = n_valid
    out["degenerate"] = n_valid == 0
    return out


def run_cfg(orbit: PeriodicOrbit) -> IntegratorConfig:
    """Tight adaptive settings with at least 200 nodes per period."""
    return IntegratorConfig("dop853", rtol=1e-12, atol=1e-14, max_step=orbit.period / 200)


def mean_rates(spec: PerturbationSpec, orbit: PeriodicOrbit) -> tuple[float, float]:
    """Orbit averages ``(1/T) int lambda_H dt`` and ``(1/T) int lambda_C dt``."""
    rates = decay_rates(spec)
    T = orbit.period
    return orbit_integral(orbit, rates.lambda_H) / T, orbit_integral(orbit, rates.lambda_C) / T


@dataclass
class RunResult:
    """Outcome of a run of the perturbed field from an offset initial state."""

    traj: Trajectory
    H_err: np.ndarray
    C_err: np.ndarray
    distance: np.ndarray
    rate: float
    t_end: float

    @property
    def times(self) -> np.ndarray:
        return self.traj.times


def _run(spec, orbit, u0, t_end, cfg, stop=None):
    Y = build_perturbed_field(spec)
    traj = integrate(Y, u0, t_end, cfg or run_cfg(orbit), stop=stop)
    sys = spec.sys
    H_err = np.array([sys.H.eval(u) - spec.h for u in traj.states])
    C_err = np.array([sys.C.eval(u) - spec.c for u in traj.states])
    dist = np.array([orbit_distance(orbit, u) for u in traj.states])
    return traj, H_err, C_err, dist


@dataclass
class StabilizationResult(RunResult):
    envelope_times: np.ndarray = None
    envelope: np.ndarray = None
    envelope_monotone: bool = False
    fitted_rate: float = math.nan
    phase: float = math.nan
    phase_residual: float = math.nan

    @property
    def final_distance(self) -> float:
        return float(self.distance[-1])


def stabilization_run(spec: PerturbationSpec, orbit: PeriodicOrbit, delta: float = 1e-2,
                      t_end: float | None = None, efolds: float = 50.0,
                      cfg: IntegratorConfig | None = None, floor: float = 1e-12) -> StabilizationResult:
    """Integrate the stabilized field from ``delta`` off the orbit.

    ``t_end`` defaults to ``efolds / |mean rate|`` with the slower of the
    active mean rates.  The envelope is the per-period maximum of the
    decaying integral's error (``|H - h|`` when the mode has the
    C-preserving term, else ``|C - c|``), kept down to ``floor``.
    """
    if not spec.mode.stabilizing:
        raise ValueError("stabilization_run needs a stabilizing mode")
    lh, lc = mean_rates(spec, orbit)
    active = [r for r, s in ((lh, spec.mode.c_term_sign), (lc, spec.mode.h_term_sign)) if s]
    rate = max(active)
    if t_end is None:
        t_end = efolds / abs(rate)
    u0 = offset_from_orbit(orbit, spec, delta)
    traj, H_err, C_err, dist = _run(spec, orbit, u0, t_end, cfg)
    T = orbit.period
    decaying = H_err if spec.mode.c_term_sign else C_err
    et, env = window_maxima(traj.times, decaying, T, floor)
    monotone = bool(env.size >= 2 and np.all(np.diff(env) < 0))
    try:
        fitted = fit_exponential_rate(traj.times, decaying, T, floor)
    except ValueError:
        fitted = math.nan
    phase, resid = math.nan, math.nan
    if t_end >= T:
        phase, resid = phase_align(orbit, traj, (t_end - T, t_end))
    return StabilizationResult(traj, H_err, C_err, dist, rate, t_end, et, env, monotone,
                               fitted, phase, resid)


@dataclass
class DestabilizationResult(RunResult):
    growth: float = 0.0
    t_growth10: float = math.nan


def destabilization_run(spec: PerturbationSpec, orbit: PeriodicOrbit, delta: float = 1e-3,
                        efolds: float = 10.0, cap: float = 100.0,
                        cfg: IntegratorConfig | None = None) -> DestabilizationResult:
    """Integrate a sign-flipped field from ``delta`` off the orbit for
    ``efolds`` predicted e-folding times (or until the distance reaches
    ``cap * delta``) and report the distance growth factor."""
    lh, lc = mean_rates(spec, orbit)
    rate = max(lh, lc)
    if not rate > 0:
        raise ValueError("destabilization_run needs a mode with a positive mean rate")
    t_end = efolds / rate
    u0 = offset_from_orbit(orbit, spec, delta)
    d0 = orbit_distance(orbit, u0)
    traj, H_err, C_err, dist = _run(spec, orbit, u0, t_end, cfg,
                                    stop=lambda t, u: orbit_distance(orbit, u) >= cap * d0)
    growth = float(np.max(dist) / d0)
    hit = np.nonzero(dist >= 10 * d0)[0]
    t10 = float(traj.times[hit[0]]) if hit.size else math.nan
    return DestabilizationResult(traj, H_err, C_err, dist, rate, t_end, growth, t10)


def planar_decay_fit(mu: ScalarField, Hcal: ScalarField, alpha: ScalarField, h: float,
                     start, delta: float = 1e-3, t_end: float = 30.0, window: float | None = None,
                     floor: float = 1e-12) -> tuple[float, Trajectory]:
    """Fitted exponential rate of ``|Hcal - h|`` for the stabilized planar
    field started on the level ``h + delta`` near ``start``."""
    Z = planar_perturbed_field(mu, Hcal, alpha, h, stabilize=True)
    v0 = project_to_level(Hcal, h + delta, start)
    window = window or math.pi / 2
    cfg = IntegratorConfig("dop853", rtol=1e-12, atol=1e-14, max_step=window / 50)
    traj = integrate(Z, v0, t_end, cfg)
    err = np.array([Hcal.eval(v) - h for v in traj.states])
    return fit_exponential_rate(traj.times, err, window, floor), traj
