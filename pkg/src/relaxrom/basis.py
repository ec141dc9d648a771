"""Periodic geometry, the translated basis family and quadrature on the torus.

The torus is the interval [-1, 1) with period 2.  Basis functions are laid out
on cells ``[(j-1) dx, j dx]`` (measured modulo 2), ``dx = 2 / N``, so that
``phi_j(x) = phi_1(x - (j - 1) dx)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

PERIOD = 2.0

__all__ = [
    "PERIOD",
    "BasisFamily",
    "QuadratureRule",
    "wrap",
    "eval_basis",
    "eval_basis_shifted",
    "expand",
    "periodic_nodes",
    "integrate_periodic",
]


def wrap(x):
    """Map ``x`` to its canonical representative in [-1, 1).

    Ties at the period boundary resolve to -1.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap() requires finite input")
    out = np.mod(arr + 1.0, PERIOD) - 1.0
    # np.mod may return exactly PERIOD for tiny negative arguments
    out = np.where(out >= 1.0, out - PERIOD, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BasisFamily:
    """N translated, compactly supported functions on the torus.

    Parameters
    ----------
    N : int
        Number of basis functions.
    shape : {"hat", "indicator"}
        ``hat`` is the piecewise linear function rising with slope ``scale``
        on ``[(j-1) dx, j dx]`` and falling on ``[j dx, (j+1) dx]`` (peak
        ``scale * dx``).  ``indicator`` is the characteristic function of the
        cell ``[(j-1) dx, j dx)``.
    scale : float
        Slope of the hat.  Ignored for the indicator shape.
    """

    N: int
    shape: str = "hat"
    scale: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if self.shape not in ("hat", "indicator"):
            raise ValueError(f"unknown basis shape {self.shape!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def dx(self) -> float:
        return PERIOD / self.N

    @property
    def support_width(self) -> float:
        return 2 * self.dx if self.shape == "hat" else self.dx

    @property
    def peak(self) -> float:
        return self.scale * self.dx if self.shape == "hat" else 1.0

    def integral(self) -> float:
        """Integral of a single basis function over the torus."""
        if self.shape == "hat":
            return self.scale * self.dx**2
        return self.dx

    def knots(self, shift: float = 0.0) -> np.ndarray:
        """Breakpoints of ``x -> phi_j(x - shift)``, wrapped into [-1, 1)."""
        return wrap(np.arange(self.N) * self.dx + shift)

    def active(self, x, shift: float = 0.0):
        """Indices (0-based) and values of the basis functions nonzero at ``x``.

        Returns arrays of shape ``(n, k)`` with ``k = 2`` for hats and ``k = 1``
        for indicators; ``sum(coeffs[idx] * val, axis=1)`` is the expansion.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        # position on [0, 2) measured from the left edge of cell 0
        pos = np.mod(x - shift, PERIOD)
        cell = np.floor(pos / self.dx).astype(np.int64)
        cell = np.minimum(cell, self.N - 1)
        local = pos - cell * self.dx
        if self.shape == "indicator":
            return cell[:, None], np.ones((x.size, 1))
        idx = np.stack([cell, (cell - 1) % self.N], axis=1)
        val = self.scale * np.stack([local, self.dx - local], axis=1)
        return idx, val


def _check_index(family: BasisFamily, j: int) -> None:
    if not 1 <= j <= family.N:
        raise IndexError(f"basis index {j} outside 1..{family.N}")


def eval_basis_shifted(family: BasisFamily, j: int, x, shift: float):
    """Evaluate ``phi_j(wrap(x - shift))`` for a 1-based index ``j``."""
    _check_index(family, j)
    idx, val = family.active(x, shift)
    out = np.sum(np.where(idx == j - 1, val, 0.0), axis=1)
    return float(out[0]) if np.ndim(x) == 0 else out


def eval_basis(family: BasisFamily, j: int, x):
    return eval_basis_shifted(family, j, x, 0.0)


def expand(family: BasisFamily, coeffs, shift: float, x):
    """Evaluate ``sum_j coeffs_j phi_j(x - shift)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (family.N,):
        raise ValueError(f"expected {family.N} coefficients, got shape {coeffs.shape}")
    idx, val = family.active(x, shift)
    out = np.sum(coeffs[idx] * val, axis=1)
    return float(out[0]) if np.ndim(x) == 0 else out


@lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule applied between consecutive breakpoints.

    Exact for polynomials of degree ``2 * nodes_per_interval - 1`` on each
    subinterval.
    """

    nodes_per_interval: int = 5

    def __post_init__(self):
        if self.nodes_per_interval < 1:
            raise ValueError("nodes_per_interval must be >= 1")

    def reference(self):
        return _gauss_legendre(self.nodes_per_interval)


def periodic_nodes(
    breakpoints: Iterable[float] = (),
    rule: QuadratureRule = QuadratureRule(),
    cells: int = 64,
):
    """Quadrature nodes and weights covering one period of the torus.

    Parameters
    ----------
    breakpoints : iterable of float
        Points where the integrand may lose smoothness.  They are wrapped and
        deduplicated; an empty set falls back to ``cells`` uniform cells.
    rule : QuadratureRule
    cells : int
        Number of uniform cells used when no breakpoints are given.

    Returns
    -------
    x, w : ndarray
        Nodes (wrapped into [-1, 1)) and weights; ``w`` sums to 2.
    """
    bps = np.asarray(list(breakpoints) if not isinstance(breakpoints, np.ndarray)
                     else breakpoints, dtype=float).ravel()
    if bps.size == 0:
        bps = -1.0 + np.arange(cells) * (PERIOD / cells)
    bps = np.unique(wrap(bps))
    left = bps
    right = np.append(bps[1:], bps[0] + PERIOD)
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    ref_x, ref_w = rule.reference()
    x = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
    w = (half[:, None] * ref_w[None, :]).ravel()
    return wrap(x), w


def integrate_periodic(
    g: Callable,
    breakpoints: Iterable[float] = (),
    rule: QuadratureRule = QuadratureRule(),
    cells: int = 64,
) -> float:
    """Composite Gauss-Legendre approximation of the integral of ``g`` over the torus.

    ``g`` must accept a numpy array of points in [-1, 1).
    """
    x, w = periodic_nodes(breakpoints, rule, cells)
    return float(np.dot(w, np.asarray(g(x), dtype=float)))
