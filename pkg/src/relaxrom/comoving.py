"""Linear transport with a local source in a co-moving translated basis.

For ``w_t + lam w_x = g(w)`` the ansatz ``w(t, x) = sum_j a_j(t) phi_j(x - lam t)``
moves with the characteristics, so Galerkin projection gives the autonomous
system

    M0 a' = G(a),    G_j(a) = int phi_j(xi) g(sum_i a_i phi_i(xi)) dxi,

with the constant mass matrix ``M0``.  A reduced model restricts ``a = V b``
for an orthonormal ``V`` and integrates ``b' = V^T M0^{-1} G(V b)``.
Both are advanced with the classical fourth-order Runge-Kutta method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import BasisFamily, QuadratureRule, periodic_nodes
from .massop import MassOperator

__all__ = ["ComovingModel", "ComovingRun"]


@dataclass
class ComovingRun:
    times: np.ndarray
    coeffs: np.ndarray  # (n_saved, N) full coefficients, lifted if reduced
    dt: float

    @property
    def final(self) -> np.ndarray:
        return self.coeffs[-1]


class ComovingModel:
    """Coefficient ODE for transport at speed ``lam`` with source ``g``.

    Parameters
    ----------
    N : int
        Number of hat functions.
    lam : float
        Transport speed.
    source : callable
        Pointwise source ``g(w)``, vectorized.
    rule : QuadratureRule
        Gauss-Legendre rule used on every knot interval.
    """

    def __init__(self, N: int, lam: float, source: Callable,
                 rule: QuadratureRule = QuadratureRule()):
        self.family = BasisFamily(N, "hat")
        self.lam = float(lam)
        self.source = source
        self.m0 = MassOperator(self.family, self.lam).m0
        self._x, self._w = periodic_nodes(self.family.knots(), rule)
        self._idx, self._val = self.family.active(self._x)

    def project(self, w0, breakpoints=()) -> np.ndarray:
        """L2 projection of ``w0`` onto the basis at ``t = 0``."""
        bps = np.concatenate([self.family.knots(), np.asarray(breakpoints, dtype=float)])
        x, w = periodic_nodes(bps, QuadratureRule(8))
        idx, val = self.family.active(x)
        b = np.bincount(idx.ravel(), (val * (w * w0(x))[:, None]).ravel(), self.family.N)
        return self.m0.solve(b)

    def load(self, a: np.ndarray) -> np.ndarray:
        """``G(a)``."""
        wq = np.sum(a[self._idx] * self._val, axis=1)
        g = self._w * self.source(wq)
        return np.bincount(self._idx.ravel(), (self._val * g[:, None]).ravel(), self.family.N)

    def rhs(self, a: np.ndarray) -> np.ndarray:
        return self.m0.solve(self.load(a))

    def reconstruct(self, a, t: float, x):
        idx, val = self.family.active(x, self.lam * t)
        return np.sum(np.asarray(a)[idx] * val, axis=1)

    def integrate(self, a0, T: float, dt: float = 1e-3, stride: int = 10,
                  basis: np.ndarray | None = None) -> ComovingRun:
        """RK4 from ``a0`` to ``T``; with ``basis`` the reduced model is used.

        ``a0`` is always a full coefficient vector; in the reduced case it is
        projected onto ``basis`` first and the recorded states are lifted.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        steps = max(1, int(math.ceil(T / dt - 1e-9)))
        dt = T / steps
        if basis is None:
            f = self.rhs
            y = np.array(a0, dtype=float)
            lift = lambda y: y  # noqa: E731
        else:
            V = np.asarray(basis, dtype=float)
            f = lambda b: V.T @ self.rhs(V @ b)  # noqa: E731
            y = V.T @ np.asarray(a0, dtype=float)
            lift = lambda b: V @ b  # noqa: E731
        times, saved = [0.0], [lift(y)]
        for n in range(1, steps + 1):
            k1 = f(y)
            k2 = f(y + 0.5 * dt * k1)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"non-finite coefficients at t={n * dt:.6g}")
            if n % stride == 0 or n == steps:
                times.append(n * dt)
                saved.append(lift(y))
        return ComovingRun(np.array(times), np.array(saved), dt)
