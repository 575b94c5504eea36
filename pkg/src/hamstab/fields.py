"""Vector algebra, scalar/vector field containers and the conservative field
``u' = nu(u) * (grad H(u) x grad C(u))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "as_vec",
    "cross",
    "triple_expand",
    "ScalarField",
    "VectorField",
    "SystemDef",
    "hamiltonian_field",
    "independence_det",
    "grad_fd_check",
    "fd_jacobian",
    "jacobian_fd_check",
    "skew",
]


def as_vec(u, dim=None) -> np.ndarray:
    """Return ``u`` as a float array, rejecting NaN/Inf and wrong sizes."""
    v = np.asarray(u, dtype=float)
    if v.ndim != 1 or (dim is not None and v.shape[0] != dim):
        raise DomainError(f"expected a state vector of length {dim}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"non-finite state {v}")
    return v


def _cross(a, b):
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def cross(a, b) -> np.ndarray:
    return _cross(as_vec(a, 3), as_vec(b, 3))


def _triple(a, b, c):
    return b * np.dot(a, c) - c * np.dot(a, b)


def triple_expand(a, b, c) -> np.ndarray:
    """``a x (b x c)`` evaluated as ``b<a,c> - c<a,b>``."""
    a = as_vec(a, 3)
    b = as_vec(b, 3)
    c = as_vec(c, 3)
    return _triple(a, b, c)


def skew(a) -> np.ndarray:
    """Matrix of ``v -> a x v``."""
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


def _fd_hessian(grad, u, step=1e-5):
    n = u.shape[0]
    out = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        out[:, j] = (grad(u + e) - grad(u - e)) / (2 * step)
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ScalarField:
    """Real function on an open subset of R^dim with an exact gradient.

    ``hess`` is optional; when absent, :meth:`hessian` falls back to central
    differences of the gradient (used only for Jacobians of derived fields).
    """

    func: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dim: int = 3
    domain_hint: str = "open subset of R^3"
    name: str = ""

    def eval(self, u) -> float:
        return float(self.func(as_vec(u, self.dim)))

    __call__ = eval

    def grad(self, u) -> np.ndarray:
        return np.asarray(self.gradient(as_vec(u, self.dim)), dtype=float)

    def hessian(self, u) -> np.ndarray:
        u = as_vec(u, self.dim)
        if self.hess is None:
            return _fd_hessian(self.gradient, u)
        return np.asarray(self.hess(u), dtype=float)

    @property
    def has_exact_hessian(self) -> bool:
        return self.hess is not None

    @classmethod
    def constant(cls, value: float, dim: int = 3, name: str = "") -> "ScalarField":
        value = float(value)
        zero = np.zeros(dim)
        zz = np.zeros((dim, dim))
        return cls(lambda u: value, lambda u: zero.copy(), lambda u: zz.copy(),
                   dim=dim, domain_hint=f"R^{dim}", name=name or repr(value))

    def scaled(self, factor: float) -> "ScalarField":
        """Return ``factor * self``."""
        f, g, h = self.func, self.gradient, self.hess
        return ScalarField(
            lambda u: factor * f(u),
            lambda u: factor * np.asarray(g(u)),
            None if h is None else (lambda u: factor * np.asarray(h(u))),
            dim=self.dim,
            domain_hint=self.domain_hint,
            name=f"{factor!r}*({self.name})",
        )


@dataclass(frozen=True)
class VectorField:
    """Autonomous vector field; ``jac`` is the exact Jacobian when known."""

    func: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dim: int = 3
    name: str = ""

    def eval(self, u) -> np.ndarray:
        u = as_vec(u, self.dim)
        out = np.asarray(self.func(u), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"field {self.name!r} is not finite at {u}")
        return out

    __call__ = eval

    def jacobian(self, u) -> np.ndarray:
        u = as_vec(u, self.dim)
        if self.jac is None:
            return fd_jacobian(self.func, u)
        return np.asarray(self.jac(u), dtype=float)

    @property
    def has_exact_jacobian(self) -> bool:
        return self.jac is not None


def fd_jacobian(func, u, step=None) -> np.ndarray:
    """Central-difference Jacobian, step ``max(1e-6, 1e-8*|u|)``."""
    u = np.asarray(u, dtype=float)
    if step is None:
        step = max(1e-6, 1e-8 * float(np.linalg.norm(u)))
    n = u.shape[0]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((np.asarray(func(u + e)) - np.asarray(func(u - e))) / (2 * step))
    return np.column_stack(cols)


@dataclass(frozen=True)
class SystemDef:
    """The triple ``(nu, H, C)`` of a three-dimensional Hamiltonian system."""

    nu: ScalarField
    H: ScalarField
    C: ScalarField
    name: str = ""
    params: dict = field(default_factory=dict)
    domain_hint: str = "where grad H x grad C != 0 and nu != 0"


def hamiltonian_field(sys: SystemDef) -> VectorField:
    nu, H, C = sys.nu, sys.H, sys.C

    def f(u):
        return nu.func(u) * _cross(H.gradient(u), C.gradient(u))

    def jac(u):
        g = np.asarray(H.gradient(u), dtype=float)
        k = np.asarray(C.gradient(u), dtype=float)
        w = _cross(g, k)
        # d(g x k) = -[k]x Hg + [g]x Hc
        dw = -skew(k) @ H.hessian(u) + skew(g) @ C.hessian(u)
        return np.outer(w, nu.gradient(u)) + nu.func(u) * dw

    exact = H.has_exact_hessian and C.has_exact_hessian
    return VectorField(f, jac if exact else None, dim=3, name=f"X[{sys.name}]")


def _det3(a, b, c) -> float:
    # columns a | b | c, cofactor expansion along the first column
    return (a[0] * (b[1] * c[2] - b[2] * c[1])
            - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def independence_det(sys: SystemDef, u) -> float:
    """``det(grad H | grad C | X)``, zero exactly at equilibria."""
    u = as_vec(u, 3)
    g = sys.H.grad(u)
    k = sys.C.grad(u)
    x = sys.nu.eval(u) * cross(g, k)
    return float(_det3(g, k, x))


def grad_fd_check(f: ScalarField, u, step: float = 1e-5) -> float:
    """Max discrepancy between ``f.grad`` and central differences of ``f``.

    Discrepancies are scaled by ``max(1, |grad|_inf)`` so that vanishing
    gradient components do not blow up the ratio.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    u = as_vec(u, f.dim)
    g = f.grad(u)
    fd = np.empty_like(g)
    for j in range(f.dim):
        e = np.zeros(f.dim)
        e[j] = step
        fd[j] = (f.func(u + e) - f.func(u - e)) / (2 * step)
    scale = max(1.0, float(np.max(np.abs(g))))
    return float(np.max(np.abs(g - fd)) / scale)


def jacobian_fd_check(X: VectorField, u) -> float:
    """Relative mismatch between the exact Jacobian and finite differences."""
    u = as_vec(u, X.dim)
    J = X.jacobian(u)
    F = fd_jacobian(X.func, u, step=1e-6)
    scale = max(1.0, float(np.max(np.abs(J))))
    return float(np.max(np.abs(J - F)) / scale)
