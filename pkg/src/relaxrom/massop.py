"""Shifted-overlap mass matrices ``M_jk(t) = int phi_j(x) phi_k(x + 2 lam t) dx``.

For translated bases ``M(t)`` is circulant and its first row depends only on
the distance between the centre of ``phi_1`` and the shifted centre of
``phi_k``.  For the hat family that overlap is ``scale^2 dx^3 B(d / dx)`` with
``B`` the centred cubic B-spline; for indicators it is ``dx * max(1 - |d|/dx, 0)``.
Rows are evaluated at the reduced time ``t mod tau`` (``tau = dx / (2 lam)``)
and rotated by the number of elapsed periods.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

from .basis import BasisFamily, QuadratureRule, integrate_periodic, wrap
from .circulant import Circulant, solve_rank1, DEFAULT_TOL

__all__ = [
    "MassOperator",
    "SingularTimeTable",
    "RegularizedMass",
    "overlap_integral",
]


def _bspline(u):
    a = np.abs(u)
    return np.where(a < 1.0, 2.0 / 3.0 - a**2 + 0.5 * a**3,
                    np.where(a < 2.0, (2.0 - a) ** 3 / 6.0, 0.0))


def _bspline_deriv(u):
    a = np.abs(u)
    return np.where(a < 1.0, -2.0 * u + 1.5 * u * a,
                    np.where(a < 2.0, -0.5 * np.sign(u) * (2.0 - a) ** 2, 0.0))


def _triangle(u):
    return np.maximum(1.0 - np.abs(u), 0.0)


@dataclass(frozen=True)
class SingularTimeTable:
    times: np.ndarray
    right: list  # null direction e for each time
    left: list  # null direction f for each time
    sigma_ratio: np.ndarray  # smallest / largest singular value of M(t_l)


@dataclass(frozen=True, eq=False)
class RegularizedMass:
    """``M(t) + rho f e^T``."""

    mass: Circulant
    f: np.ndarray
    e: np.ndarray
    rho: float

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        return self.mass.matvec(v) + self.rho * self.f * np.dot(self.e, v)

    def solve(self, rhs, tol: float = DEFAULT_TOL):
        return solve_rank1(self.mass, self.f, self.e, self.rho, rhs, tol)

    def to_dense(self):
        return self.mass.to_dense() + self.rho * np.outer(self.f, self.e)


@dataclass(frozen=True, eq=False)
class MassOperator:
    """Time-parameterized mass matrix of a translated basis family.

    Parameters
    ----------
    family : BasisFamily
    lam : float
        Relaxation (transport) speed; the matrices involve the relative
        shift ``2 lam t`` between the right- and left-moving families.
    """

    family: BasisFamily
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def tau(self) -> float:
        return self.family.dx / (2.0 * self.lam)

    def _reduce(self, t: float):
        k = int(np.floor(t / self.tau))
        return k, t - k * self.tau

    def _offsets(self, t_red: float) -> np.ndarray:
        # signed centre distance (in cells) between phi_1 and phi_k(. + 2 lam t)
        N = self.family.N
        u = np.arange(N) - 2.0 * self.lam * t_red / self.family.dx
        return np.mod(u + N / 2.0, N) - N / 2.0

    def first_row(self, t: float) -> np.ndarray:
        k, t_red = self._reduce(t)
        fam = self.family
        u = self._offsets(t_red)
        if fam.shape == "hat":
            row = fam.scale**2 * fam.dx**3 * _bspline(u)
        else:
            row = fam.dx * _triangle(u)
        return np.roll(row, k % fam.N)

    def first_row_dot(self, t: float) -> np.ndarray:
        """First row of ``dM/dt``."""
        fam = self.family
        if fam.shape != "hat":
            raise ValueError("dM/dt is only defined for the hat basis")
        k, t_red = self._reduce(t)
        u = self._offsets(t_red)
        row = -2.0 * self.lam * fam.scale**2 * fam.dx**2 * _bspline_deriv(u)
        return np.roll(row, k % fam.N)

    def mass_matrix(self, t: float) -> Circulant:
        return Circulant(self.first_row(t))

    def mass_matrix_dot(self, t: float) -> Circulant:
        return Circulant(self.first_row_dot(t))

    @cached_property
    def m0(self) -> Circulant:
        return self.mass_matrix(0.0)

    # -- singular times -------------------------------------------------

    def singular_time(self, ell: int) -> float:
        return (2 * ell + 1) / (2.0 * self.lam * self.family.N)

    @cached_property
    def _null_pair0(self):
        return _null_pair(self.mass_matrix(self.singular_time(0)).to_dense())

    def null_pair(self, t: float):
        """Null directions ``(e, f)`` of the singular time in the period containing ``t``.

        Over one period ``M(t + tau) = P M(t)``, so the right null vector is
        unchanged and the left one is rotated.
        """
        k, _ = self._reduce(t)
        e, f0 = self._null_pair0
        f = np.roll(f0, -k)
        return e, _orient(f, e)

    def singular_times(self, t_max: float) -> SingularTimeTable:
        if not t_max > 0:
            raise ValueError("t_max must be positive")
        if self.family.shape != "hat":
            raise ValueError("singular time prediction assumes the hat basis")
        times, right, left, ratio = [], [], [], []
        ell = 0
        while (t := self.singular_time(ell)) <= t_max:
            A = self.mass_matrix(t).to_dense()
            e, f = _null_pair(A)
            sv = np.linalg.svd(A, compute_uv=False)
            times.append(t)
            right.append(e)
            left.append(f)
            ratio.append(sv[-1] / sv[0])
            ell += 1
        return SingularTimeTable(np.array(times), right, left, np.array(ratio))

    def regularized_matrix(self, t: float, rho: float) -> RegularizedMass:
        if rho < 0:
            raise ValueError("rho must be non-negative")
        e, f = self.null_pair(t)
        return RegularizedMass(self.mass_matrix(t), f, e, float(rho))


def _orient(f: np.ndarray, e: np.ndarray) -> np.ndarray:
    d = np.dot(f, e)
    if abs(d) > 1e-12:
        return f if d > 0 else -f
    return f if f[np.argmax(np.abs(f))] > 0 else -f


def _null_pair(A: np.ndarray):
    U, _, Vt = np.linalg.svd(A)
    e = Vt[-1]
    e = e if e[np.argmax(np.abs(e))] > 0 else -e
    return e, _orient(U[:, -1], e)


def overlap_integral(
    phi_a: Callable,
    phi_b: Callable,
    shift: float,
    breakpoints: Iterable[float] = (),
    rule: QuadratureRule = QuadratureRule(),
    cells: int = 256,
) -> float:
    """``int phi_a(x) phi_b(x + shift) dx`` over the torus."""
    return integrate_periodic(lambda x: phi_a(x) * phi_b(wrap(x + shift)),
                              breakpoints, rule, cells)
