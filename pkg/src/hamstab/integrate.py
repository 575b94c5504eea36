"""ODE integration, Poincare-section event localization and variational
(monodromy) integration."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.interpolate import CubicHermiteSpline

from .errors import IntegrationError, NoCrossingError
from .fields import VectorField, as_vec

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "Plane",
    "locate_section_crossings",
    "iter_section_crossings",
    "Monodromy",
    "monodromy_matrix",
    "product_eigenvalues",
    "PRECISE",
]

_ADAPTIVE = {"rk45": RK45, "dop853": DOP853}


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk4"`` (fixed ``step``), ``"rk45"`` (embedded 4(5)) or
    ``"dop853"``; ``max_step`` caps adaptive steps (used to densify nodes)."""

    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-12
    step: Optional[float] = None
    max_steps: int = 2_000_000
    max_step: float = math.inf

    def __post_init__(self):
        if self.method not in ("rk4", "rk45", "dop853"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "rk4":
            if self.step is None or not self.step > 0:
                raise ValueError("fixed-step rk4 needs step > 0")
        elif not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0 or not self.max_step > 0:
            raise ValueError("max_steps and max_step must be positive")


PRECISE = IntegratorConfig(method="dop853", rtol=1e-12, atol=1e-14)


class Trajectory:
    """Solution nodes plus a piecewise cubic Hermite interpolant built from the
    stored states and the field values at the nodes."""

    def __init__(self, times, states, derivs):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("a trajectory needs at least one node")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        self._spline = None
        if self.times.size > 1:
            self._spline = CubicHermiteSpline(self.times, self.states, self.derivs, axis=0)

    def __len__(self):
        return self.times.size

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1].copy()

    def __call__(self, t):
        """Interpolated state(s); exact at the nodes."""
        if self._spline is None:
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(self.states[0], t.shape + self.states[0].shape).copy()
        t = np.asarray(t, dtype=float)
        out = self._spline(t)
        # return stored states exactly at nodes
        idx = np.searchsorted(self.times, t)
        idx = np.clip(idx, 0, self.times.size - 1)
        hit = self.times[idx] == t
        if np.ndim(t) == 0:
            return self.states[idx].copy() if hit else out
        out[hit] = self.states[idx[hit]]
        return out


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"non-finite state encountered at t={t:.6g}")


def _steps(rhs, y0, t0, t_end, cfg: IntegratorConfig):
    """Yield ``(t, y)`` after every accepted step from ``t0`` to ``t_end``."""
    y = np.array(y0, dtype=float)
    if cfg.method == "rk4":
        n = max(1, int(math.ceil((t_end - t0) / cfg.step - 1e-12)))
        if n > cfg.max_steps:
            raise IntegrationError(f"max_steps={cfg.max_steps} exceeded")
        ts = np.linspace(t0, t_end, n + 1)
        for i in range(n):
            t, h = ts[i], ts[i + 1] - ts[i]
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2, y + h / 2 * k1)
            k3 = rhs(t + h / 2, y + h / 2 * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            _check_finite(y, ts[i + 1])
            yield ts[i + 1], y
        return
    solver = _ADAPTIVE[cfg.method](rhs, t0, y, t_end, rtol=cfg.rtol, atol=cfg.atol,
                                   max_step=cfg.max_step)
    count = 0
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            if msg and "step size" in msg:
                raise IntegrationError(f"step underflow at t={solver.t:.6g}: {msg}")
            raise IntegrationError(f"integration failed at t={solver.t:.6g}: {msg}")
        count += 1
        if count > cfg.max_steps:
            raise IntegrationError(f"max_steps={cfg.max_steps} exceeded at t={solver.t:.6g}")
        _check_finite(solver.y, solver.t)
        yield solver.t, solver.y.copy()


def _field_rhs(field: VectorField):
    func = field.func

    def rhs(t, y):
        return np.asarray(func(y), dtype=float)

    return rhs


def integrate(field: VectorField, u0, t_end: float, cfg: IntegratorConfig | None = None,
              stop: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """Integrate ``u' = field(u)`` on ``[0, t_end]``.

    ``t_end = 0`` returns the single initial node.  ``stop(t, u)`` may end the
    run early after any accepted step.
    """
    cfg = cfg or IntegratorConfig()
    u0 = as_vec(u0, field.dim)
    if not t_end >= 0:
        raise ValueError("t_end must be non-negative")
    rhs = _field_rhs(field)
    times, states, derivs = [0.0], [u0], [rhs(0.0, u0)]
    _check_finite(derivs[0], 0.0)
    if t_end > 0:
        for t, y in _steps(rhs, u0, 0.0, t_end, cfg):
            f = rhs(t, y)
            _check_finite(f, t)
            times.append(t)
            states.append(y)
            derivs.append(f)
            if stop is not None and stop(t, y):
                break
    return Trajectory(times, np.array(states), np.array(derivs))


@dataclass(frozen=True)
class Plane:
    """Section ``{u : <u - point, normal> = 0}``."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = as_vec(self.point)
        n = as_vec(self.normal, p.shape[0])
        if not np.linalg.norm(n) > 0:
            raise ValueError("section normal must be nonzero")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)

    def value(self, u) -> float:
        return float(np.dot(np.asarray(u) - self.point, self.normal))


def _hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _bisect_crossing(section, t0, t1, y0, y1, f0, f1, tol=1e-12):
    a, b = t0, t1
    sa = section.value(y0)
    while b - a > tol:
        m = 0.5 * (a + b)
        sm = section.value(_hermite(t0, t1, y0, y1, f0, f1, m))
        if (sm < 0) == (sa < 0) and sm != 0:
            a, sa = m, sm
        else:
            b = m
    return b


def iter_section_crossings(field: VectorField, u0, section: Plane,
                           cfg: IntegratorConfig | None = None, t_max: float = 1e3):
    """Yield upward crossings ``(t*, u*)`` with ``t* > 0`` in time order."""
    cfg = cfg or IntegratorConfig()
    u0 = as_vec(u0, field.dim)
    rhs = _field_rhs(field)
    t_prev, y_prev, f_prev = 0.0, u0, rhs(0.0, u0)
    s_prev = section.value(u0)
    for t, y in _steps(rhs, u0, 0.0, t_max, cfg):
        f = rhs(t, y)
        s = section.value(y)
        if s_prev < 0 <= s:
            tc = _bisect_crossing(section, t_prev, t, y_prev, y, f_prev, f)
            uc = _hermite(t_prev, t, y_prev, y, f_prev, f, tc)
            if np.dot(rhs(tc, uc), section.normal) > 0:
                yield float(tc), uc
        t_prev, y_prev, f_prev, s_prev = t, y, f, s


def locate_section_crossings(field: VectorField, u0, section: Plane, count: int = 1,
                             cfg: IntegratorConfig | None = None, t_max: float = 1e3,
                             ) -> list[tuple[float, np.ndarray]]:
    """First ``count`` upward crossings (``<u', n> > 0``) of ``section`` for
    ``t > 0``, localized by bisection on the cubic interpolant of each step."""
    if count < 1:
        raise ValueError("count must be >= 1")
    found = []
    for hit in iter_section_crossings(field, u0, section, cfg, t_max):
        found.append(hit)
        if len(found) == count:
            return found
    raise NoCrossingError(f"found {len(found)} of {count} section crossings before t={t_max:g}")


# -- variational equations ------------------------------------------------------

@dataclass
class Monodromy:
    """State-transition matrix over one period, kept as a product of segment
    factors ``matrix = segments[-1] @ ... @ segments[0]``."""

    matrix: np.ndarray
    period: float
    segments: list = field(default_factory=list)
    trace_integral: float = 0.0
    closure_residual: float = 0.0
    periodic: bool = True

    def log_det(self) -> tuple[float, float]:
        """``(sign, log|det|)`` accumulated over the segment factors."""
        sign, total = 1.0, 0.0
        for S in self.segments or [self.matrix]:
            s, ld = np.linalg.slogdet(S)
            sign *= s
            total += ld
        return sign, total

    def abel_liouville_error(self) -> float:
        """Relative mismatch of ``det M`` against ``exp(int trace DY)``."""
        sign, ld = self.log_det()
        if sign <= 0:
            return math.inf
        return abs(math.expm1(ld - self.trace_integral))

    def multipliers(self) -> np.ndarray:
        """Eigenvalues of the monodromy, sorted by decreasing modulus."""
        return product_eigenvalues(self.segments or [self.matrix])


def _variational_rhs(field: VectorField, n: int):
    func = field.func
    jac = field.jacobian

    def rhs(t, y):
        u = y[:n]
        J = jac(u)
        M = y[n:n + n * n].reshape(n, n)
        return np.concatenate([np.asarray(func(u), dtype=float), (J @ M).ravel(), [np.trace(J)]])

    return rhs


def monodromy_matrix(field: VectorField, anchor, T: float, cfg: IntegratorConfig | None = None,
                     segments: int = 32, waypoints: Callable[[float], np.ndarray] | None = None,
                     closure_tol: float = 1e-6) -> Monodromy:
    """Integrate ``M' = DY(u) M``, ``M(0) = I`` jointly with the state over ``[0, T]``.

    The period is split into ``segments`` pieces; each restarts the matrix at
    the identity and, when ``waypoints(t)`` is supplied, restarts the state at
    that point of the orbit instead of carrying the integrated state forward.
    A closure mismatch above ``closure_tol`` sets ``periodic=False`` and warns.
    """
    cfg = cfg or PRECISE
    if not T > 0:
        raise ValueError("period must be positive")
    anchor = as_vec(anchor, field.dim)
    n = field.dim
    rhs = _variational_rhs(field, n)
    eye = np.eye(n).ravel()
    bounds = np.linspace(0.0, T, segments + 1)
    u = anchor
    factors = []
    trace_int = 0.0
    mismatch = 0.0
    for k in range(segments):
        t0, t1 = bounds[k], bounds[k + 1]
        if waypoints is not None and k > 0:
            start = as_vec(waypoints(t0), n)
            mismatch = max(mismatch, float(np.linalg.norm(start - u)))
            u = start
        y = np.concatenate([u, eye, [0.0]])
        for _, y in _steps(rhs, y, t0, t1, cfg):
            pass
        u = y[:n]
        factors.append(y[n:n + n * n].reshape(n, n).copy())
        trace_int += y[-1]
    mismatch = max(mismatch, float(np.linalg.norm(u - anchor)))
    M = np.eye(n)
    for S in factors:
        M = S @ M
    periodic = mismatch <= closure_tol
    if not periodic:
        warnings.warn(f"anchor does not close up after T={T:.6g}: residual {mismatch:.3g}",
                      RuntimeWarning, stacklevel=2)
    return Monodromy(M, float(T), factors, float(trace_int), mismatch, periodic)


def _split_blocks(Z, tol):
    n = Z.shape[0]
    cuts = [0]
    for i in range(1, n):
        if np.max(np.abs(Z[i:, :i])) < tol:
            cuts.append(i)
    cuts.append(n)
    return [(cuts[j], cuts[j + 1]) for j in range(len(cuts) - 1)]


def product_eigenvalues(factors, max_sweeps: int = 100, block_tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of ``factors[-1] @ ... @ factors[0]`` without forming the product.

    Orthogonal iteration through the chain (``A_k Q_{k-1} = Q_k R_k``) drives
    the product towards block upper-triangular form; eigenvalues are read off
    the diagonal blocks of ``R_N ... R_1`` accumulated in log scale, so tiny
    multipliers keep their relative accuracy.
    """
    factors = [np.asarray(A, dtype=float) for A in factors]
    n = factors[0].shape[0]
    Q0 = np.eye(n)
    prev = None
    result = None
    for sweep in range(max_sweeps):
        Q = Q0
        Rs = []
        for A in factors:
            Q, R = np.linalg.qr(A @ Q)
            d = np.sign(np.diag(R))
            d[d == 0] = 1.0
            Q = Q * d
            R = d[:, None] * R
            Rs.append(R)
        Z = Q0.T @ Q
        blocks = _split_blocks(Z, block_tol)
        eigs = []
        for a, b in blocks:
            if b - a == 1:
                logmod = float(np.sum([np.log(abs(R[a, a])) for R in Rs]))
                sign = 1.0 if Z[a, a] >= 0 else -1.0
                eigs.append(sign * math.exp(min(logmod, 709.0)))
                continue
            P = np.eye(b - a)
            logscale = 0.0
            for R in Rs:
                P = R[a:b, a:b] @ P
                s = np.linalg.norm(P)
                P = P / s
                logscale += math.log(s)
            eigs.extend(np.linalg.eigvals(Z[a:b, a:b] @ P) * math.exp(logscale))
        result = np.array(eigs, dtype=complex)
        result = result[np.argsort(-np.abs(result), kind="stable")]
        Q0 = Q
        if prev is not None and len(prev) == len(result):
            rel = np.abs(result - prev) / np.maximum(np.abs(result), 1e-300)
            if np.all(rel < 1e-12) or (sweep >= 2 and all(b - a == 1 for a, b in blocks)):
                break
        prev = result
    return result
