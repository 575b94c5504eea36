"""Built-in systems: the Rikitake dynamo (conservative part), the free rigid
body, and a planar harmonic oscillator with its 3D embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, SystemDef, VectorField

__all__ = ["rikitake", "rikitake_field", "rigid_body", "harmonic2d", "PlanarSystem", "BUILTINS", "builtin"]


def _const(value, dim=3, name=""):
    return ScalarField.constant(value, dim=dim, name=name)


def rikitake(beta: float = 1.0) -> SystemDef:
    """``H = (-x^2 + y^2)/4 - beta*z``, ``C = (x^2 + y^2)/2 + z^2``, ``nu = 1``.

    The Hamiltonian field is ``(yz + beta*y, xz - beta*x, -xy)``; equilibria
    are the lines ``(x, 0, beta)``, ``(0, y, -beta)`` and ``(0, 0, z)``.
    """
    b = float(beta)
    if not np.isfinite(b):
        raise ValueError("beta must be finite")
    H = ScalarField(
        lambda u: 0.25 * (-u[0] ** 2 + u[1] ** 2) - b * u[2],
        lambda u: np.array([-0.5 * u[0], 0.5 * u[1], -b]),
        lambda u: np.diag([-0.5, 0.5, 0.0]),
        name=f"0.25*(-x^2+y^2)-{b!r}*z",
    )
    C = ScalarField(
        lambda u: 0.5 * (u[0] ** 2 + u[1] ** 2) + u[2] ** 2,
        lambda u: np.array([u[0], u[1], 2.0 * u[2]]),
        lambda u: np.diag([1.0, 1.0, 2.0]),
        name="0.5*(x^2+y^2)+z^2",
    )
    return SystemDef(_const(1.0, name="1"), H, C, name="rikitake", params={"beta": b},
                     domain_hint="R^3 minus {(x,0,beta)} U {(0,y,-beta)} U {(0,0,z)}")


def rikitake_field(beta: float = 1.0) -> VectorField:
    """Direct componentwise form of the Rikitake field (independent oracle)."""
    b = float(beta)

    def f(u):
        x, y, z = u
        return np.array([y * z + b * y, x * z - b * x, -x * y])

    def jac(u):
        x, y, z = u
        return np.array([[0.0, z + b, y], [z - b, 0.0, x], [-y, -x, 0.0]])

    return VectorField(f, jac, name="rikitake-direct")


def rigid_body(i1: float, i2: float, i3: float) -> SystemDef:
    """Free rigid body in body angular momentum ``(x, y, z)``.

    ``H = (x^2/i1 + y^2/i2 + z^2/i3)/2``, ``C = |u|^2 / 2``; moments must be
    positive and pairwise distinct.
    """
    inertia = np.array([i1, i2, i3], dtype=float)
    if not np.all(np.isfinite(inertia)) or np.any(inertia <= 0):
        raise ValueError("moments of inertia must be positive")
    if len(set(inertia.tolist())) != 3:
        raise ValueError("moments of inertia must be pairwise distinct")
    inv = 1.0 / inertia
    H = ScalarField(
        lambda u: 0.5 * float(np.dot(inv, u * u)),
        lambda u: inv * u,
        lambda u: np.diag(inv),
        name="kinetic energy",
    )
    C = ScalarField(
        lambda u: 0.5 * float(np.dot(u, u)),
        lambda u: np.array(u, dtype=float),
        lambda u: np.eye(3),
        name="0.5*|u|^2",
    )
    return SystemDef(_const(1.0, name="1"), H, C, name="rigid_body",
                     params={"i1": float(i1), "i2": float(i2), "i3": float(i3)},
                     domain_hint="R^3 minus the principal axes")


@dataclass(frozen=True)
class PlanarSystem:
    """``v' = mu(v) * J grad Hcal(v)`` with ``J = [[0, 1], [-1, 0]]``."""

    mu: ScalarField
    Hcal: ScalarField
    name: str = ""
    domain_hint: str = "W"

    def field(self) -> VectorField:
        mu, Hc = self.mu, self.Hcal

        def f(v):
            g = Hc.gradient(v)
            return mu.func(v) * np.array([g[1], -g[0]])

        def jac(v):
            g = np.asarray(Hc.gradient(v), dtype=float)
            Jg = np.array([g[1], -g[0]])
            Hh = Hc.hessian(v)
            return np.outer(Jg, mu.gradient(v)) + mu.func(v) * np.array([Hh[1], -Hh[0]])

        return VectorField(f, jac if Hc.has_exact_hessian else None, dim=2,
                           name=f"J grad[{self.name}]")

    def embedded(self) -> SystemDef:
        """3D realization ``H(v, z) = Hcal(v)``, ``C = z``, ``nu(v, z) = mu(v)``,
        whose Hamiltonian field is ``(mu J grad Hcal, 0)``."""
        return SystemDef(_lift(self.mu), _lift(self.Hcal), _z_field(),
                         name=f"{self.name}-embedded", domain_hint=f"{self.domain_hint} x R")


def _lift(f: ScalarField) -> ScalarField:
    def hess(u):
        out = np.zeros((3, 3))
        out[:2, :2] = f.hessian(u[:2])
        return out

    return ScalarField(
        lambda u: f.func(u[:2]),
        lambda u: np.append(np.asarray(f.gradient(u[:2]), dtype=float), 0.0),
        hess if f.has_exact_hessian else None,
        name=f.name,
    )


def _z_field() -> ScalarField:
    e3 = np.array([0.0, 0.0, 1.0])
    return ScalarField(lambda u: u[2], lambda u: e3.copy(), lambda u: np.zeros((3, 3)), name="z")


def harmonic2d() -> PlanarSystem:
    """``mu = 1``, ``Hcal = (x^2 + y^2)/2``; every orbit is a circle of period 2 pi."""
    Hcal = ScalarField(
        lambda v: 0.5 * (v[0] ** 2 + v[1] ** 2),
        lambda v: np.array([v[0], v[1]], dtype=float),
        lambda v: np.eye(2),
        dim=2,
        domain_hint="R^2 minus the origin",
        name="0.5*(x^2+y^2)",
    )
    return PlanarSystem(_const(1.0, dim=2, name="1"), Hcal, name="harmonic2d",
                        domain_hint="R^2 minus the origin")


BUILTINS = {
    "rikitake": lambda beta=1.0: rikitake(beta),
    "rigid_body": lambda i1=1.0, i2=2.0, i3=3.0: rigid_body(i1, i2, i3),
    "harmonic2d": lambda: harmonic2d().embedded(),
}


def builtin(name: str, **params) -> SystemDef:
    """Look up a built-in system by name (planar systems come back embedded)."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin system {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)
