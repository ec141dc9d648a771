"""Reference solutions, a finite-volume relaxation solver and error measures."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import PERIOD, QuadratureRule, wrap
from .problems import Flux

__all__ = [
    "GridFunction",
    "cell_centers",
    "RiccatiParams",
    "RiccatiBlowUp",
    "exact_linear_advection",
    "exact_riccati",
    "burgers_riemann_profile",
    "exact_burgers_riemann",
    "fv_relaxation_solve",
    "error_norms",
    "shock_position",
    "shock_speed_estimate",
]


def cell_centers(n: int) -> np.ndarray:
    return -1.0 + (np.arange(n) + 0.5) * (PERIOD / n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples at the ``n`` uniform cell centres of the torus."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())

    @classmethod
    def from_function(cls, func: Callable, n: int) -> "GridFunction":
        return cls(func(cell_centers(n)))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return PERIOD / self.n

    @property
    def x(self) -> np.ndarray:
        return cell_centers(self.n)

    def __call__(self, x):
        """Periodic piecewise linear interpolation between cell centres."""
        xs = self.x
        return np.interp(wrap(np.asarray(x, dtype=float)),
                         np.concatenate([[xs[-1] - PERIOD], xs, [xs[0] + PERIOD]]),
                         np.concatenate([[self.values[-1]], self.values, [self.values[0]]]))

    def resample(self, n: int) -> "GridFunction":
        if n == self.n:
            return self
        return GridFunction(self(cell_centers(n)))

    def to_csv(self, path, column: str = "u") -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", column])
            for xi, ui in zip(self.x, self.values):
                writer.writerow([f"{xi:.17g}", f"{ui:.17g}"])


# -- analytic solutions -------------------------------------------------


def exact_linear_advection(u0: Callable, lam: float, t: float, n: int) -> GridFunction:
    return GridFunction(u0(wrap(cell_centers(n) - lam * t)))


class RiccatiBlowUp(ArithmeticError):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


@dataclass(frozen=True)
class RiccatiParams:
    """Linear transport with source ``gamma w^2 + delta w``."""

    gamma: float
    delta: float
    lam: float
    w0: Callable
    support: tuple = (-0.5, 0.5)

    def source(self, w):
        return self.gamma * w**2 + self.delta * w


def exact_riccati(params: RiccatiParams, t: float, x, guard: float = 1e-12):
    """Closed-form solution, zero outside the transported support."""
    x = np.asarray(x, dtype=float)
    xi = wrap(x - params.lam * t)
    lo, hi = params.support
    inside = (xi > lo) & (xi < hi)
    w0 = np.asarray(params.w0(xi), dtype=float)
    if params.delta == 0.0:
        growth, gain = 1.0, params.gamma * t
    else:
        growth = math.exp(-params.delta * t)
        gain = params.gamma / params.delta * (1.0 - growth)
    safe = np.where(inside & (w0 != 0.0), w0, 1.0)
    denom = growth / safe - gain
    bad = inside & (w0 != 0.0) & (np.abs(denom) < guard)
    if np.any(bad):
        raise RiccatiBlowUp(f"solution blows up near x={x[bad].ravel()[0]:.6g} at t={t:g}",
                            x=x[bad].ravel()[0])
    out = np.where(inside & (w0 != 0.0), 1.0 / denom, 0.0)
    return float(out) if out.ndim == 0 else out


def burgers_riemann_profile(a: float, t: float, x):
    """Entropy solution of Burgers' equation for ``u0 = a (chi_[0,1/2) - 1)``.

    The up-jump at ``x = 0`` opens a rarefaction fan ``u = x / t`` on
    ``[-a t, 0]``; the down-jump at ``x = 1/2`` is a shock travelling at
    ``(0 + (-a)) / 2 = -a / 2``.  Valid until the shock reaches the fan at
    ``t = 1 / a``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if t < 0 or t > 1.0 / a:
        raise ValueError(f"t={t:g} outside the validity window [0, {1.0 / a:g}]")
    x = wrap(np.asarray(x, dtype=float))
    shock = 0.5 - 0.5 * a * t
    out = np.full_like(x, -a, dtype=float)
    plateau = (x >= 0.0) & (x < shock)
    out = np.where(plateau, 0.0, out)
    if t > 0:
        fan = (x >= -a * t) & (x < 0.0)
        out = np.where(fan, x / t, out)
    return float(out) if out.ndim == 0 else out


def exact_burgers_riemann(a: float, t: float, n: int) -> GridFunction:
    return GridFunction(burgers_riemann_profile(a, t, cell_centers(n)))


# -- finite-volume relaxation solver -------------------------------------


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _transport(wp, wm, nu, order):
    """One forward-Euler upwind update; ``nu = lam dt / dx``."""
    if order == 1:
        return (wp - nu * (wp - np.roll(wp, 1)),
                wm + nu * (np.roll(wm, -1) - wm))
    sp = _minmod(wp - np.roll(wp, 1), np.roll(wp, -1) - wp)
    sm = _minmod(wm - np.roll(wm, 1), np.roll(wm, -1) - wm)
    face_p = wp + 0.5 * sp  # value at i+1/2 from the left
    face_m = np.roll(wm - 0.5 * sm, -1)  # value at i+1/2 from the right
    return (wp - nu * (face_p - np.roll(face_p, 1)),
            wm + nu * (face_m - np.roll(face_m, 1)))


@dataclass
class FVResult:
    frames: list  # (t, GridFunction) pairs
    dt: float
    steps: int

    @property
    def final(self) -> GridFunction:
        return self.frames[-1][1]


def fv_relaxation_solve(u0: Callable, flux: Flux, lam: float, eps: float, n_cells: int,
                        T: float, order: int = 2, dt: float | None = None,
                        times=None, rule: QuadratureRule = QuadratureRule()) -> FVResult:
    """Upwind finite volumes for the relaxation system with an implicit source step.

    Each step transports ``w+`` and ``w-`` at speeds ``+lam`` and ``-lam``
    (first-order upwind, or MUSCL-minmod with Heun's method for ``order=2``)
    and then relaxes ``v <- (eps v + dt f(u)) / (eps + dt)`` with ``u`` fixed.

    ``times`` lists output times besides ``T``; they are hit to within one step.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    dx = PERIOD / n_cells
    if dt is None:
        dt = 0.4 * dx / lam
    if dt > dx / (2.0 * lam) * (1 + 1e-12):
        raise ValueError(f"CFL violation: dt={dt:g} > dx/(2 lam)={dx / (2 * lam):g}")
    steps = max(1, int(math.ceil(T / dt - 1e-9))) if T > 0 else 0
    if steps:
        dt = T / steps

    # cell averages by Gauss-Legendre on each cell
    ref_x, ref_w = rule.reference()
    edges = -1.0 + np.arange(n_cells) * dx
    xq = edges[:, None] + 0.5 * dx * (ref_x[None, :] + 1.0)
    uq = u0(xq.ravel()).reshape(xq.shape)
    u = (uq * ref_w).sum(axis=1) / 2.0
    v = (flux(uq) * ref_w).sum(axis=1) / 2.0
    wp, wm = v + lam * u, v - lam * u

    want = sorted(set(float(s) for s in (() if times is None else times)) | {float(T)})
    marks = {int(round(s / dt)) if steps else 0: s for s in want if s <= T + 1e-12}
    frames = []
    if 0 in marks:
        frames.append((0.0, GridFunction(u)))
    nu = lam * dt / dx
    for n in range(1, steps + 1):
        if order == 1:
            wp, wm = _transport(wp, wm, nu, 1)
        else:
            p1, m1 = _transport(wp, wm, nu, 2)
            p2, m2 = _transport(p1, m1, nu, 2)
            wp, wm = 0.5 * (wp + p2), 0.5 * (wm + m2)
        u = (wp - wm) / (2.0 * lam)
        v = 0.5 * (wp + wm)
        v = (eps * v + dt * flux(u)) / (eps + dt)
        wp, wm = v + lam * u, v - lam * u
        if n in marks:
            frames.append((n * dt, GridFunction(u)))
    return FVResult(frames, dt, steps)


# -- measurements --------------------------------------------------------


def error_norms(f: GridFunction, g: GridFunction) -> dict:
    """Discrete L1, L2 and Linf distances, resampling to the finer grid."""
    n = max(f.n, g.n)
    d = f.resample(n).values - g.resample(n).values
    dx = PERIOD / n
    return {"L1": float(np.sum(np.abs(d)) * dx),
            "L2": float(math.sqrt(np.sum(d * d) * dx)),
            "Linf": float(np.max(np.abs(d)))}


class NoShockError(ValueError):
    pass


def shock_position(grid: GridFunction, jump_threshold: float, window: float = 0.1) -> float:
    """Location of the steepest descending front (periodic).

    The steepest cell-to-cell drop seeds the search; the position is the
    drop-weighted centroid of the cell interfaces within ``window`` of it,
    which is stable for fronts smeared over several cells.
    """
    u = grid.values
    drop = u - np.roll(u, -1)
    i = int(np.argmax(drop))
    if drop[i] <= jump_threshold:
        raise NoShockError(f"no drop exceeds {jump_threshold:g} (largest {drop[i]:.3g})")
    half = max(0, int(window / grid.dx))
    offs = np.arange(-half, half + 1)
    wts = np.maximum(drop[(i + offs) % grid.n], 0.0)
    centre = i + float(np.dot(wts, offs) / wts.sum())
    return float(wrap(grid.x[0] + (centre + 0.5) * grid.dx))


def shock_speed_estimate(frames, jump_threshold: float) -> float:
    """Least-squares slope of the shock position over ``(t, GridFunction)`` frames."""
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    t = np.array([f[0] for f in frames])
    x = np.array([shock_position(f[1], jump_threshold) for f in frames])
    x = np.unwrap(x, period=PERIOD)
    return float(np.polyfit(t, x, 1)[0])
