"""Full-order coefficient model for the relaxation system in shifted bases.

The diagonal variables ``w+- = v +- lam u`` are expanded as

    w+(t, x) = sum_j a+_j(t) phi_j(x - lam t),
    w-(t, x) = sum_j a-_j(t) phi_j(x + lam t),

and the coefficient vectors are advanced with the block system

    [ M0   -M(t1)  ] [a+]      [ r1 ]
    [ M0    N(t1)  ] [a-]  =   [ r2 ],      N(t) = M(t) + rho f e^T,

where the right-hand sides depend on the scheme (semi-implicit or explicit).
The block system is solved through ``(2 M(t1) + rho f e^T) a- = r2 - r1``
followed by ``M0 a+ = r1 + M(t1) a-``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import BasisFamily, QuadratureRule, periodic_nodes
from .circulant import Circulant, SingularMatrixError, solve_rank1
from .massop import MassOperator
from .problems import Flux

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "CoefficientState",
    "Trajectory",
    "SubcharacteristicCheck",
    "SolverError",
    "RelaxationSolver",
    "check_subcharacteristic",
    "w_to_uv",
    "uv_to_w",
]

SCHEMES = ("semi_implicit", "explicit")


class SolverError(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message, step=None, t=None):
        super().__init__(message)
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    """Discretization parameters.

    ``dt`` defaults to ``eps / 2`` and ``rho`` to ``eps``.
    """

    lam: float
    eps: float
    N: int
    dt: float | None = None
    rho: float | None = None
    scheme: str = "semi_implicit"
    quad_nodes: int = 5
    sigma_tol: float = 1e-10
    snapshot_stride: int = 10
    hat_scale: float = 1.0
    enforce_subcharacteristic: bool = True

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", 0.5 * self.eps)
        if self.rho is None:
            object.__setattr__(self, "rho", self.eps)
        for name in ("lam", "eps", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @property
    def cfl_ok(self) -> bool:
        return self.dt <= 0.5 * self.eps * (1 + 1e-12)


@dataclass(frozen=True, eq=False)
class CoefficientState:
    t: float
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "plus", np.asarray(self.plus, dtype=float))
        object.__setattr__(self, "minus", np.asarray(self.minus, dtype=float))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.plus)) and np.all(np.isfinite(self.minus)))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.plus)), np.max(np.abs(self.minus))))


@dataclass
class Trajectory:
    """States recorded every ``stride`` steps, plus the final state."""

    states: list
    config: SolverConfig
    stride: int
    final: CoefficientState = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def plus_matrix(self) -> np.ndarray:
        return np.column_stack([s.plus for s in self.states])

    def minus_matrix(self) -> np.ndarray:
        return np.column_stack([s.minus for s in self.states])


@dataclass(frozen=True)
class SubcharacteristicCheck:
    passed: bool
    margin: float
    max_speed: float

    def __bool__(self):
        return self.passed


def check_subcharacteristic(u0: Callable, flux: Flux, lam: float, samples: int = 10_000):
    """Check ``lam >= max |f'(u0(x))|`` on a uniform sample of the torus."""
    x = -1.0 + 2.0 * np.arange(samples) / samples
    speed = float(np.max(np.abs(flux.df(u0(x)))))
    return SubcharacteristicCheck(lam >= speed, lam - speed, speed)


def w_to_uv(w_plus, w_minus, lam):
    w_plus, w_minus = np.asarray(w_plus), np.asarray(w_minus)
    return (w_plus - w_minus) / (2.0 * lam), 0.5 * (w_plus + w_minus)


def uv_to_w(u, v, lam):
    u, v = np.asarray(u), np.asarray(v)
    return v + lam * u, v - lam * u


class RelaxationSolver:
    """Coefficient dynamics for one flux and one configuration."""

    def __init__(self, flux: Flux, config: SolverConfig):
        self.flux = flux
        self.cfg = config
        self.family = BasisFamily(config.N, "hat", config.hat_scale)
        self.mass = MassOperator(self.family, config.lam)
        self.rule = QuadratureRule(config.quad_nodes)
        self.m0 = self.mass.m0

    # -- initial data ---------------------------------------------------

    def load_vectors(self, u0):
        """``b+-_k = int phi_k(x) (f(u0(x)) +- lam u0(x)) dx``."""
        extra = getattr(u0, "breakpoints", ())
        x, w = periodic_nodes(np.concatenate([self.family.knots(), np.asarray(extra, float)]),
                              self.rule)
        u = u0(x)
        fu = self.flux(u)
        idx, val = self.family.active(x)
        wv = w[:, None] * val
        N = self.family.N
        bp = np.bincount(idx.ravel(), (wv * (fu + self.cfg.lam * u)[:, None]).ravel(), N)
        bm = np.bincount(idx.ravel(), (wv * (fu - self.cfg.lam * u)[:, None]).ravel(), N)
        return bp, bm

    def project_initial(self, u0) -> CoefficientState:
        bp, bm = self.load_vectors(u0)
        tol = self.cfg.sigma_tol
        return CoefficientState(0.0, self.m0.solve(bp, tol), self.m0.solve(bm, tol))

    # -- reconstruction -------------------------------------------------

    def reconstruct_w(self, state: CoefficientState, x):
        lam, t = self.cfg.lam, state.t
        ip, vp = self.family.active(x, lam * t)
        im, vm = self.family.active(x, -lam * t)
        wp = np.sum(state.plus[ip] * vp, axis=1)
        wm = np.sum(state.minus[im] * vm, axis=1)
        if np.ndim(x) == 0:
            return float(wp[0]), float(wm[0])
        return wp, wm

    def reconstruct_u(self, state: CoefficientState, x):
        wp, wm = self.reconstruct_w(state, x)
        return (wp - wm) / (2.0 * self.cfg.lam)

    u_tilde = reconstruct_u

    def reconstruct_v(self, state: CoefficientState, x):
        wp, wm = self.reconstruct_w(state, x)
        return 0.5 * (wp + wm)

    def total_mass(self, state: CoefficientState) -> float:
        """Integral of the reconstructed ``u`` over the torus (exact)."""
        c = self.family.integral() / (2.0 * self.cfg.lam)
        return float(c * (np.sum(state.plus) - np.sum(state.minus)))

    # -- nonlinear term -------------------------------------------------

    def ftilde(self, state: CoefficientState) -> np.ndarray:
        """``F_j = int phi_j(x - lam t) f(u~(t, x)) dx`` by exact-partition quadrature."""
        lam, t = self.cfg.lam, state.t
        fam = self.family
        knots = np.concatenate([fam.knots(lam * t), fam.knots(-lam * t)])
        x, w = periodic_nodes(knots, self.rule)
        ip, vp = fam.active(x, lam * t)
        im, vm = fam.active(x, -lam * t)
        u = (np.sum(state.plus[ip] * vp, axis=1) - np.sum(state.minus[im] * vm, axis=1)) / (2.0 * lam)
        g = w * self.flux(u)
        return np.bincount(ip.ravel(), (vp * g[:, None]).ravel(), fam.N)

    # -- time stepping --------------------------------------------------

    def _rhs(self, state: CoefficientState, explicit: bool):
        cfg = self.cfg
        t, dt, eps, rho = state.t, cfg.dt, cfg.eps, cfg.rho
        a, b = state.plus, state.minus
        Mn = self.mass.mass_matrix(t)
        Mdot = self.mass.mass_matrix_dot(t)
        e, f = self.mass.null_pair(t)
        M0a = self.m0.matvec(a)
        Mnb = Mn.matvec(b)
        Mdb = Mdot.matvec(b)
        Nnb = Mnb + rho * f * np.dot(e, b)
        r1 = M0a - Mnb - dt * Mdb
        F = self.ftilde(state)
        if explicit:
            r2 = M0a + Nnb + dt * Mdb - (dt / eps) * (M0a + Mnb) + (2.0 * dt / eps) * F
        else:
            r2 = eps / (eps + dt) * (M0a + Nnb + dt * Mdb) + dt / (eps + dt) * (2.0 * F)
        return r1, r2

    def _solve_block(self, t1: float, r1, r2):
        cfg = self.cfg
        M1 = self.mass.mass_matrix(t1)
        e, f = self.mass.null_pair(t1)
        try:
            b1 = solve_rank1(Circulant(2.0 * M1.row), f, e, cfg.rho, r2 - r1, cfg.sigma_tol)
            a1 = self.m0.solve(r1 + M1.matvec(b1), cfg.sigma_tol)
        except SingularMatrixError as exc:
            ell = int(round(t1 * self.cfg.lam * self.cfg.N - 0.5))
            raise SolverError(
                f"block system singular at t={t1:.6g} (nearest singular time "
                f"t_{ell} = {self.mass.singular_time(ell):.6g}, rho={cfg.rho:g})",
                t=t1) from exc
        return a1, b1

    def step(self, state: CoefficientState) -> CoefficientState:
        if self.cfg.scheme == "explicit":
            return self.step_explicit(state)
        return self.step_semi_implicit(state)

    def step_semi_implicit(self, state: CoefficientState) -> CoefficientState:
        r1, r2 = self._rhs(state, explicit=False)
        t1 = state.t + self.cfg.dt
        return CoefficientState(t1, *self._solve_block(t1, r1, r2))

    def step_explicit(self, state: CoefficientState) -> CoefficientState:
        r1, r2 = self._rhs(state, explicit=True)
        t1 = state.t + self.cfg.dt
        return CoefficientState(t1, *self._solve_block(t1, r1, r2))

    def integrate(self, u0, T: float, stride: int | None = None,
                  initial: CoefficientState | None = None,
                  callback: Callable | None = None) -> Trajectory:
        """March ``round(T / dt)`` steps from the projected initial data."""
        cfg = self.cfg
        if T < 0:
            raise ValueError("T must be non-negative")
        stride = cfg.snapshot_stride if stride is None else stride
        if not cfg.cfl_ok:
            warnings.warn(f"dt={cfg.dt:g} exceeds eps/2={cfg.eps / 2:g}; "
                          "the coefficient scheme is expected to be unstable",
                          RuntimeWarning, stacklevel=2)
        if initial is None:
            if cfg.enforce_subcharacteristic:
                chk = check_subcharacteristic(u0, self.flux, cfg.lam)
                if not chk:
                    raise ValueError(
                        f"subcharacteristic condition violated: lam={cfg.lam:g} < "
                        f"max|f'(u0)|={chk.max_speed:g}")
            state = self.project_initial(u0)
        else:
            state = initial
        n_steps = int(round(T / cfg.dt))
        states = [state]
        for n in range(1, n_steps + 1):
            state = self.step(state)
            if not state.is_finite():
                ratio = self.mass.mass_matrix(state.t).is_singular(cfg.sigma_tol).ratio
                raise SolverError(
                    f"non-finite coefficients at step {n} (t={state.t:.6g}); "
                    f"min/max |eig M(t)| = {ratio:.3e}", step=n, t=state.t)
            if callback is not None:
                callback(n, state)
            if n % stride == 0:
                states.append(state)
        log.debug("integrated %d steps to t=%.6g", n_steps, state.t)
        return Trajectory(states, cfg, stride, final=state)
