"""Perturbations that keep a periodic orbit of ``u' = nu (grad H x grad C)``
and prescribe its stability.

With ``g = grad H`` and ``k = grad C`` the two building blocks are

* the C-preserving term  ``-alpha (H - h) [k x (g x k)]``, which leaves ``C``
  invariant and gives ``L(H - h) = -alpha |g x k|^2 (H - h)``;
* the H-preserving term  ``+gain (C - c) [g x (g x k)]``, which leaves ``H``
  invariant and gives ``L(C - c) = -gain |g x k|^2 (C - c)``.

Flipping the sign in front of a gain turns the corresponding contraction into
an expansion.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import (ScalarField, SystemDef, VectorField, _cross, _triple, as_vec,
                     hamiltonian_field)

__all__ = [
    "Mode",
    "PerturbationSpec",
    "DecayRates",
    "c_preserving_term",
    "h_preserving_term",
    "build_perturbed_field",
    "decay_rates",
    "planar_perturbed_field",
    "planar_decay_rate",
]


class Mode(str, enum.Enum):
    PRESERVE_C_STABILIZE = "PreserveC_Stabilize"
    PRESERVE_C_DESTABILIZE = "PreserveC_Destabilize"
    PRESERVE_H_STABILIZE = "PreserveH_Stabilize"
    PRESERVE_H_DESTABILIZE = "PreserveH_Destabilize"
    FULL_STABILIZE = "Full_Stabilize"
    FULL_DESTABILIZE_FLIP_ALPHA = "Full_Destabilize_FlipAlpha"
    FULL_DESTABILIZE_FLIP_BETA = "Full_Destabilize_FlipBeta"

    @property
    def c_term_sign(self) -> int:
        """+1 stabilizing, -1 destabilizing, 0 when the C-preserving term is unused."""
        return _SIGNS[self][0]

    @property
    def h_term_sign(self) -> int:
        return _SIGNS[self][1]

    @property
    def is_full(self) -> bool:
        return self.c_term_sign != 0 and self.h_term_sign != 0

    @property
    def stabilizing(self) -> bool:
        return min(self.c_term_sign, self.h_term_sign) >= 0


_SIGNS = {
    Mode.PRESERVE_C_STABILIZE: (1, 0),
    Mode.PRESERVE_C_DESTABILIZE: (-1, 0),
    Mode.PRESERVE_H_STABILIZE: (0, 1),
    Mode.PRESERVE_H_DESTABILIZE: (0, -1),
    Mode.FULL_STABILIZE: (1, 1),
    Mode.FULL_DESTABILIZE_FLIP_ALPHA: (-1, 1),
    Mode.FULL_DESTABILIZE_FLIP_BETA: (1, -1),
}


def _one():
    return ScalarField.constant(1.0, name="1")


@dataclass(frozen=True)
class PerturbationSpec:
    """Target fiber ``(h, c)``, positive gains and the mode to build.

    In the single-gain ``PreserveH_*`` modes the H-preserving term is driven by
    ``alpha``; ``beta`` only enters the ``Full_*`` modes.
    """

    sys: SystemDef
    h: float
    c: float
    mode: Mode = Mode.FULL_STABILIZE
    alpha: ScalarField = field(default_factory=_one)
    beta: ScalarField = field(default_factory=_one)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (np.isfinite(self.h) and np.isfinite(self.c)):
            raise ValueError("fiber values must be finite")

    @classmethod
    def from_seed(cls, sys: SystemDef, seed, **kwargs) -> "PerturbationSpec":
        """Fill ``h = H(seed)`` and ``c = C(seed)``."""
        seed = as_vec(seed, 3)
        return cls(sys, sys.H.eval(seed), sys.C.eval(seed), **kwargs)

    @property
    def h_gain(self) -> ScalarField:
        return self.beta if self.mode.is_full else self.alpha

    def check_gains(self, points) -> bool:
        """True when every active gain is strictly positive at ``points``."""
        gains = []
        if self.mode.c_term_sign:
            gains.append(self.alpha)
        if self.mode.h_term_sign:
            gains.append(self.h_gain)
        return all(g.eval(p) > 0 for g in gains for p in points)


@dataclass(frozen=True)
class DecayRates:
    """Pointwise rates with ``L_Y (H - h) = lambda_H (H - h)`` and likewise for C."""

    lambda_H: Callable[[np.ndarray], float]
    lambda_C: Callable[[np.ndarray], float]


def _c_term_parts(sys, h, gain, sign):
    H, C = sys.H, sys.C

    def f(u):
        g = H.gradient(u)
        k = C.gradient(u)
        return (-sign * gain.func(u) * (H.func(u) - h)) * _triple(k, g, k)

    def jac(u):
        g = np.asarray(H.gradient(u), dtype=float)
        k = np.asarray(C.gradient(u), dtype=float)
        Hg, Hc = H.hessian(u), C.hessian(u)
        a, dh = gain.func(u), H.func(u) - h
        kk, kg = k @ k, k @ g
        w = g * kk - k * kg
        dw = (np.outer(g, 2.0 * (Hc @ k)) + kk * Hg
              - np.outer(k, Hc @ g + Hg @ k) - kg * Hc)
        return -sign * (dh * np.outer(w, gain.gradient(u)) + a * np.outer(w, g) + a * dh * dw)

    exact = H.has_exact_hessian and C.has_exact_hessian
    return f, (jac if exact else None)


def _h_term_parts(sys, c, gain, sign):
    H, C = sys.H, sys.C

    def f(u):
        g = H.gradient(u)
        k = C.gradient(u)
        return (sign * gain.func(u) * (C.func(u) - c)) * _triple(g, g, k)

    def jac(u):
        g = np.asarray(H.gradient(u), dtype=float)
        k = np.asarray(C.gradient(u), dtype=float)
        Hg, Hc = H.hessian(u), C.hessian(u)
        b, dc = gain.func(u), C.func(u) - c
        gk, gg = g @ k, g @ g
        q = g * gk - k * gg
        dq = (np.outer(g, Hg @ k + Hc @ g) + gk * Hg
              - np.outer(k, 2.0 * (Hg @ g)) - gg * Hc)
        return sign * (dc * np.outer(q, gain.gradient(u)) + b * np.outer(q, k) + b * dc * dq)

    exact = H.has_exact_hessian and C.has_exact_hessian
    return f, (jac if exact else None)


def c_preserving_term(spec: PerturbationSpec) -> VectorField:
    """``-alpha (H - h) [grad C x (grad H x grad C)]``, negated when destabilizing."""
    sign = spec.mode.c_term_sign
    if sign == 0:
        raise ValueError(f"mode {spec.mode.value} has no C-preserving term")
    f, jac = _c_term_parts(spec.sys, spec.h, spec.alpha, sign)
    return VectorField(f, jac, name="c-preserving term")


def h_preserving_term(spec: PerturbationSpec) -> VectorField:
    """``+gain (C - c) [grad H x (grad H x grad C)]``, negated when destabilizing."""
    sign = spec.mode.h_term_sign
    if sign == 0:
        raise ValueError(f"mode {spec.mode.value} has no H-preserving term")
    f, jac = _h_term_parts(spec.sys, spec.c, spec.h_gain, sign)
    return VectorField(f, jac, name="h-preserving term")


def build_perturbed_field(spec: PerturbationSpec) -> VectorField:
    """Conservative field plus the signed terms selected by ``spec.mode``."""
    X = hamiltonian_field(spec.sys)
    parts = [(X.func, X.jac)]
    if spec.mode.c_term_sign:
        parts.append(_c_term_parts(spec.sys, spec.h, spec.alpha, spec.mode.c_term_sign))
    if spec.mode.h_term_sign:
        parts.append(_h_term_parts(spec.sys, spec.c, spec.h_gain, spec.mode.h_term_sign))
    funcs = [p[0] for p in parts]
    jacs = [p[1] for p in parts]

    def f(u):
        out = funcs[0](u)
        for g in funcs[1:]:
            out = out + g(u)
        return out

    def jac(u):
        out = jacs[0](u)
        for j in jacs[1:]:
            out = out + j(u)
        return out

    exact = all(j is not None for j in jacs)
    return VectorField(f, jac if exact else None, dim=3,
                       name=f"{spec.sys.name}:{spec.mode.value}")


def decay_rates(spec: PerturbationSpec) -> DecayRates:
    """Rates ``lambda_H = -s_a alpha |g x k|^2`` and ``lambda_C = -s_b gain |g x k|^2``.

    The rate of an integral that the mode preserves is identically zero.
    """
    sys = spec.sys
    sa, sb = spec.mode.c_term_sign, spec.mode.h_term_sign
    alpha, gain = spec.alpha, spec.h_gain

    def n2(u):
        w = _cross(sys.H.gradient(u), sys.C.gradient(u))
        return float(w @ w)

    def lam_h(u):
        u = as_vec(u, 3)
        return -sa * alpha.func(u) * n2(u) if sa else 0.0

    def lam_c(u):
        u = as_vec(u, 3)
        return -sb * gain.func(u) * n2(u) if sb else 0.0

    return DecayRates(lam_h, lam_c)


def planar_perturbed_field(mu: ScalarField, Hcal: ScalarField, alpha: ScalarField,
                           h: float, stabilize: bool = True) -> VectorField:
    """``mu J grad Hcal -/+ alpha (Hcal - h) grad Hcal`` on the plane."""
    s = 1.0 if stabilize else -1.0

    def f(v):
        g = np.asarray(Hcal.gradient(v), dtype=float)
        return mu.func(v) * np.array([g[1], -g[0]]) - s * alpha.func(v) * (Hcal.func(v) - h) * g

    def jac(v):
        g = np.asarray(Hcal.gradient(v), dtype=float)
        Hh = Hcal.hessian(v)
        Jg = np.array([g[1], -g[0]])
        a, dh = alpha.func(v), Hcal.func(v) - h
        rot = np.outer(Jg, mu.gradient(v)) + mu.func(v) * np.array([Hh[1], -Hh[0]])
        pert = dh * np.outer(g, alpha.gradient(v)) + a * np.outer(g, g) + a * dh * Hh
        return rot - s * pert

    return VectorField(f, jac if Hcal.has_exact_hessian else None, dim=2,
                       name="planar perturbed field")


def planar_decay_rate(Hcal: ScalarField, alpha: ScalarField, stabilize: bool = True):
    """Pointwise rate ``-/+ alpha |grad Hcal|^2`` of ``Hcal - h``."""
    s = 1.0 if stabilize else -1.0

    def rate(v):
        g = Hcal.grad(v)
        return -s * alpha.eval(v) * float(g @ g)

    return rate
