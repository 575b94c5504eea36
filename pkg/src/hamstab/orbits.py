"""Periodic orbits on a prescribed ``(H, C)`` fiber: projection, detection,
distance/phase diagnostics and Floquet analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NoCrossingError, OrbitError, ProjectionError
from .fields import ScalarField, SystemDef, VectorField, as_vec, hamiltonian_field
from .integrate import (PRECISE, IntegratorConfig, Plane, Trajectory, integrate,
                        iter_section_crossings, monodromy_matrix)
from .perturbation import Mode, PerturbationSpec, build_perturbed_field, decay_rates

__all__ = [
    "project_to_fiber",
    "project_to_level",
    "PeriodicOrbit",
    "find_periodic_orbit",
    "orbit_distance",
    "phase_align",
    "FloquetReport",
    "floquet_analysis",
    "predicted_multipliers",
    "orbit_integral",
    "offset_from_orbit",
    "window_maxima",
    "fit_exponential_rate",
    "TRIVIAL_TOL",
]

TRIVIAL_TOL = 1e-3


def project_to_fiber(sys: SystemDef, h: float, c: float, guess, tol: float = 1e-12,
                     max_iter: int = 50) -> np.ndarray:
    """Gauss-Newton (minimum-norm steps) onto ``H = h, C = c``."""
    u = as_vec(guess, 3).copy()
    for _ in range(max_iter + 1):
        r = np.array([sys.H.eval(u) - h, sys.C.eval(u) - c])
        if np.max(np.abs(r)) <= tol:
            return u
        A = np.vstack([sys.H.grad(u), sys.C.grad(u)])
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[0] == 0 or sv[-1] <= 1e-10 * sv[0]:
            raise ProjectionError(f"grad H and grad C are dependent at {u}; cannot project")
        step, *_ = np.linalg.lstsq(A, -r, rcond=None)
        u = u + step
        if not np.all(np.isfinite(u)):
            raise ProjectionError("projection diverged")
    raise ProjectionError(f"no convergence in {max_iter} Gauss-Newton iterations")


def project_to_level(f: ScalarField, value: float, guess, tol: float = 1e-13,
                     max_iter: int = 50) -> np.ndarray:
    """Newton steps along ``grad f`` onto the single level set ``f = value``."""
    u = as_vec(guess, f.dim).copy()
    for _ in range(max_iter + 1):
        r = f.eval(u) - value
        if abs(r) <= tol * max(1.0, abs(value)):
            return u
        g = f.grad(u)
        gg = float(g @ g)
        if gg == 0:
            raise ProjectionError(f"critical point of {f.name!r} at {u}")
        u = u - (r / gg) * g
    raise ProjectionError(f"no convergence in {max_iter} Newton iterations")


def _hermite_eval(y0, y1, f0, f1, h, s):
    s = s[..., None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _hermite_deriv(y0, y1, f0, f1, h, s):
    s = s[..., None]
    d00 = 6 * s * s - 6 * s
    d10 = 3 * s * s - 4 * s + 1
    d01 = -d00
    d11 = 3 * s * s - 2 * s
    return (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1


@dataclass
class PeriodicOrbit:
    """Closed orbit ``gamma`` of period ``period`` through ``anchor``.

    ``states[i] = gamma(i * period / n)``; ``velocities`` holds the field at
    the samples, so :meth:`at` is a periodic cubic Hermite interpolant.
    """

    anchor: np.ndarray
    period: float
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    h: float
    c: float
    closure: float = 0.0
    fiber_residual: float = 0.0
    min_speed: float = 0.0
    interp_error: float = 0.0
    system: SystemDef | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.times.size

    def _locate(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.period)
        step = self.period / self.n_samples
        i = np.minimum(np.floor(t / step).astype(int), self.n_samples - 1)
        s = (t - i * step) / step
        j = (i + 1) % self.n_samples
        return i, j, s, step

    def at(self, t) -> np.ndarray:
        """``gamma(t)`` for any real ``t`` (scalar or array)."""
        i, j, s, step = self._locate(t)
        return _hermite_eval(self.states[i], self.states[j], self.velocities[i],
                             self.velocities[j], step, np.asarray(s))

    def velocity(self, t) -> np.ndarray:
        i, j, s, step = self._locate(t)
        return _hermite_deriv(self.states[i], self.states[j], self.velocities[i],
                              self.velocities[j], step, np.asarray(s))

    def summary(self) -> dict:
        return {
            "anchor": [float(v) for v in self.anchor],
            "period": float(self.period),
            "closure_residual": float(self.closure),
            "fiber_residual": float(self.fiber_residual),
            "min_speed": float(self.min_speed),
            "samples": int(self.n_samples),
            "h": float(self.h),
            "c": float(self.c),
        }


def _refine_period(X, anchor, section, T, cfg, iters=4):
    """Newton iterations on the section function ``s(phi_T(anchor)) = 0``."""
    for _ in range(iters):
        u = integrate(X, anchor, T, cfg).final
        s = section.value(u)
        ds = float(np.dot(X.eval(u), section.normal))
        dT = -s / ds
        T += dT
        if abs(dT) < 1e-15 * max(1.0, T):
            break
    return T


def _sample_orbit(X, anchor, T, n, cfg):
    cfg_dense = replace(cfg, max_step=min(cfg.max_step, T / 2048))
    traj = integrate(X, anchor, T, cfg_dense)
    times = np.arange(n) * (T / n)
    states = traj(times)
    states[0] = anchor
    vel = np.array([X.eval(u) for u in states])
    return traj, times, states, vel


def find_periodic_orbit(sys: SystemDef, h: float, c: float, seed,
                        cfg: IntegratorConfig = PRECISE, t_max: float = 1e3,
                        closure_tol: float = 1e-6, fiber_tol: float = 1e-6,
                        min_samples: int = 256, max_samples: int = 1 << 14,
                        interp_tol: float = 1e-8) -> PeriodicOrbit:
    """Find and certify the periodic orbit of the conservative field through
    the projection of ``seed`` onto the ``(h, c)`` fiber.

    The return time is the first upward crossing of the plane through the
    anchor with normal ``X(anchor)`` that lands near the anchor; it is then
    refined by Newton iterations on the section function.
    """
    try:
        anchor = project_to_fiber(sys, h, c, seed)
    except ProjectionError as exc:
        raise OrbitError(f"fiber projection failed: {exc}") from exc
    X = hamiltonian_field(sys)
    x0 = X.eval(anchor)
    speed0 = float(np.linalg.norm(x0))
    if speed0 <= 1e-12 * max(1.0, float(np.linalg.norm(anchor))):
        raise OrbitError(f"anchor {anchor} is an equilibrium point")
    section = Plane(anchor, x0 / speed0)
    scale = max(1.0, float(np.linalg.norm(anchor)))
    T = None
    try:
        for tc, uc in iter_section_crossings(X, anchor, section, cfg, t_max):
            if np.linalg.norm(uc - anchor) <= 1e-4 * scale:
                T = tc
                break
    except NoCrossingError:
        pass
    if T is None:
        raise OrbitError(f"no return to the section within t_max={t_max:g}")
    T = _refine_period(X, anchor, section, T, cfg)

    n = min_samples
    while True:
        traj, times, states, vel = _sample_orbit(X, anchor, T, 2 * n, cfg)
        # error of the n-sample interpolant at the interleaved midpoints
        coarse = PeriodicOrbit(anchor, T, times[::2], states[::2], vel[::2], h, c)
        est = float(np.max(np.linalg.norm(coarse.at(times[1::2]) - states[1::2], axis=1)))
        n *= 2
        if est < interp_tol or n >= max_samples:
            break
    closure = float(np.linalg.norm(traj.final - anchor))
    fiber = max(
        float(np.max(np.abs([sys.H.eval(u) - h for u in states]))),
        float(np.max(np.abs([sys.C.eval(u) - c for u in states]))),
    )
    min_speed = float(np.min(np.linalg.norm(vel, axis=1)))
    orbit = PeriodicOrbit(anchor, float(T), times, states, vel, float(h), float(c),
                          closure, fiber, min_speed, est, sys)
    if closure > closure_tol:
        raise OrbitError(f"closure failure: |phi_T(anchor) - anchor| = {closure:.3g}")
    if fiber > fiber_tol:
        raise OrbitError(f"orbit leaves the fiber: residual {fiber:.3g}")
    if min_speed <= 1e-9 * speed0:
        raise OrbitError("orbit passes through an equilibrium point")
    return orbit


def orbit_distance(orbit: PeriodicOrbit, u) -> float:
    """Distance from ``u`` to the orbit: nearest sample, then Gauss-Newton in
    ``t`` on the interpolant over the two neighbouring intervals."""
    u = as_vec(u, orbit.states.shape[1])
    d2 = np.sum((orbit.states - u) ** 2, axis=1)
    i = int(np.argmin(d2))
    best = math.sqrt(d2[i])
    step = orbit.period / orbit.n_samples
    t0 = i * step
    lo, hi = t0 - step, t0 + step
    t = t0
    for _ in range(20):
        r = orbit.at(t) - u
        v = orbit.velocity(t)
        vv = float(v @ v)
        if vv == 0:
            break
        dt = -float(r @ v) / vv
        t_new = min(max(t + dt, lo), hi)
        if abs(t_new - t) < 1e-15 * max(1.0, orbit.period):
            t = t_new
            break
        t = t_new
    return min(best, float(np.linalg.norm(orbit.at(t) - u)))


def phase_align(orbit: PeriodicOrbit, traj: Trajectory | callable, window, n_eval: int = 256):
    """Phase ``theta0`` in ``[0, T)`` minimizing the mean of
    ``|x(t) - gamma(t + theta)|`` over ``window``, and that mean residual."""
    ta, tb = float(window[0]), float(window[1])
    if not tb > ta:
        raise ValueError("window must have t_b > t_a")
    ts = np.linspace(ta, tb, n_eval)
    xs = np.asarray(traj(ts))
    T = orbit.period

    def objective(theta):
        return float(np.mean(np.linalg.norm(xs - orbit.at(ts + theta), axis=1)))

    m = min(orbit.n_samples, 1024)
    grid = np.arange(m) * (T / m)
    vals = [objective(th) for th in grid]
    j = int(np.argmin(vals))
    res = minimize_scalar(objective, bounds=(grid[j] - T / m, grid[j] + T / m),
                          method="bounded", options={"xatol": 1e-14 * max(1.0, T)})
    theta, resid = float(res.x), float(res.fun)
    if vals[j] < resid:
        theta, resid = float(grid[j]), float(vals[j])
    return float(np.mod(theta, T)), resid


def orbit_integral(orbit: PeriodicOrbit, f) -> float:
    """``int_0^T f(gamma(t)) dt`` by the periodic trapezoid rule on the samples."""
    vals = np.array([f(u) for u in orbit.states], dtype=float)
    return float(np.sum(vals) * orbit.period / orbit.n_samples)


def predicted_multipliers(spec: PerturbationSpec, orbit: PeriodicOrbit):
    """Closed-form multipliers ``{1 (k+1 times), exp(int rate)}`` and the two
    exponent integrals ``(int lambda_H, int lambda_C)``."""
    rates = decay_rates(spec)
    eh = orbit_integral(orbit, rates.lambda_H) if spec.mode.c_term_sign else 0.0
    ec = orbit_integral(orbit, rates.lambda_C) if spec.mode.h_term_sign else 0.0
    pred = [1.0]
    pred.append(math.exp(eh) if spec.mode.c_term_sign else 1.0)
    pred.append(math.exp(ec) if spec.mode.h_term_sign else 1.0)
    pred = np.array(sorted(pred, reverse=True))
    return pred, (eh, ec)


@dataclass
class FloquetReport:
    computed: np.ndarray
    predicted: np.ndarray
    exponents: tuple
    period: float
    mode: str
    abel_liouville_error: float = 0.0
    closure: float = 0.0

    @property
    def rel_errors(self) -> np.ndarray:
        return np.abs(np.abs(self.computed) - self.predicted) / np.abs(self.predicted)

    def trivial_count(self, tol: float = TRIVIAL_TOL) -> int:
        return int(np.sum(np.abs(self.computed - 1.0) <= tol))

    def matches(self, tol: float = 1e-3) -> bool:
        return bool(np.all(self.rel_errors <= tol))

    @property
    def unstable(self) -> bool:
        return bool(np.any(np.abs(self.computed) > 1.0 + TRIVIAL_TOL))

    def to_dict(self, tol: float = 1e-3) -> dict:
        return {
            "mode": self.mode,
            "period": float(self.period),
            "computed": [{"re": float(z.real), "im": float(z.imag), "modulus": float(abs(z))}
                         for z in self.computed],
            "predicted": [float(p) for p in self.predicted],
            "relative_errors": [float(e) for e in self.rel_errors],
            "exponent_H": float(self.exponents[0]),
            "exponent_C": float(self.exponents[1]),
            "trivial_count": self.trivial_count(),
            "abel_liouville_error": float(self.abel_liouville_error),
            "closure": float(self.closure),
            "unstable": self.unstable,
            "match": self.matches(tol),
        }


def floquet_analysis(spec: PerturbationSpec, orbit: PeriodicOrbit,
                     cfg: IntegratorConfig = PRECISE, segments: int = 32) -> FloquetReport:
    """Monodromy eigenvalues of the perturbed field along ``orbit`` against the
    closed-form prediction.  Segments restart from the orbit samples, so the
    unstable modes do not drive the variational run off the orbit."""
    Y = build_perturbed_field(spec)
    mono = monodromy_matrix(Y, orbit.anchor, orbit.period, cfg, segments=segments,
                            waypoints=orbit.at)
    computed = mono.multipliers()
    predicted, exps = predicted_multipliers(spec, orbit)
    return FloquetReport(computed, predicted, exps, orbit.period, spec.mode.value,
                         mono.abel_liouville_error(), mono.closure_residual)


def offset_from_orbit(orbit: PeriodicOrbit, spec_or_mode, delta: float,
                      t: float = 0.0) -> np.ndarray:
    """A point at distance about ``delta`` from ``gamma(t)``, normal to the flow.

    For ``PreserveC`` (``PreserveH``) modes the offset lies in the tangent
    plane of the C (H) level and is projected back onto that level, so the
    preserved integral keeps its orbit value.
    """
    sys = orbit.system
    mode = spec_or_mode.mode if isinstance(spec_or_mode, PerturbationSpec) else Mode(spec_or_mode)
    u = orbit.at(t)
    g, k = sys.H.grad(u), sys.C.grad(u)
    x = np.cross(g, k)
    if mode.c_term_sign and not mode.h_term_sign:
        d = np.cross(k, x)
    elif mode.h_term_sign and not mode.c_term_sign:
        d = np.cross(g, x)
    else:
        d = g / np.linalg.norm(g) + k / np.linalg.norm(k)
        d = d - (d @ x) / (x @ x) * x
    p = u + delta * d / np.linalg.norm(d)
    if mode.c_term_sign and not mode.h_term_sign:
        p = project_to_level(sys.C, orbit.c, p)
    elif mode.h_term_sign and not mode.c_term_sign:
        p = project_to_level(sys.H, orbit.h, p)
    return p


def window_maxima(times, values, window: float, floor: float = 0.0):
    """Maxima of ``|values|`` over consecutive windows ``[k w, (k+1) w)``;
    returns ``(centers, maxima)`` for complete windows above ``floor``."""
    times = np.asarray(times, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    nwin = int(math.floor((times[-1] - times[0]) / window + 1e-9))
    centers, maxima = [], []
    for k in range(nwin):
        a = times[0] + k * window
        sel = (times >= a) & (times < a + window)
        if not np.any(sel):
            continue
        m = float(np.max(vals[sel]))
        if m <= floor:
            break
        centers.append(a + 0.5 * window)
        maxima.append(m)
    return np.array(centers), np.array(maxima)


def fit_exponential_rate(times, values, window: float, floor: float = 1e-11) -> float:
    """Log-linear least-squares slope of the per-window maxima of ``|values|``.

    Negative for decay.  Windows whose maximum falls below ``floor`` (and all
    later ones) are dropped as round-off.
    """
    centers, maxima = window_maxima(times, values, window, floor)
    if centers.size < 2:
        raise ValueError("need at least two windows above the noise floor to fit a rate")
    slope, _ = np.polyfit(centers, np.log(maxima), 1)
    return float(slope)
