"""Snapshot POD bases and projected (lift, step, project) reduced dynamics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fom import CoefficientState, RelaxationSolver, SolverError, Trajectory

__all__ = [
    "SnapshotSet",
    "ReducedBasisPair",
    "ReducedState",
    "ReducedTrajectory",
    "collect_snapshots",
    "pod",
    "reduce_state",
    "lift_state",
    "step_reduced",
    "integrate_reduced",
    "write_singular_values_csv",
]

ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Coefficient snapshots stored column-wise (``N x S``)."""

    plus: np.ndarray
    minus: np.ndarray
    tags: tuple = ()

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.plus, dtype=float))
        m = np.atleast_2d(np.asarray(self.minus, dtype=float))
        if p.shape != m.shape:
            raise ValueError(f"plus {p.shape} and minus {m.shape} snapshots differ in shape")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(m))):
            raise ValueError("snapshots must be finite")
        object.__setattr__(self, "plus", p)
        object.__setattr__(self, "minus", m)

    @property
    def N(self) -> int:
        return self.plus.shape[0]

    @property
    def count(self) -> int:
        return self.plus.shape[1]


def collect_snapshots(trajectories, stride: int = 1) -> SnapshotSet:
    """Concatenate every ``stride``-th recorded state of each trajectory.

    Recorded states are already subsampled by the trajectory's own stride,
    so ``stride`` here thins them further.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sizes = {t.config.N for t in trajectories}
    if len(sizes) > 1:
        raise ValueError(f"trajectories have different N: {sorted(sizes)}")
    plus, minus, tags = [], [], []
    for k, traj in enumerate(trajectories):
        states = traj.states[::stride]
        plus.extend(s.plus for s in states)
        minus.extend(s.minus for s in states)
        tags.append((traj.meta.get("run_id", k), traj.stride * stride))
    return SnapshotSet(np.column_stack(plus), np.column_stack(minus), tuple(tags))


@dataclass(frozen=True, eq=False)
class ReducedBasisPair:
    """Orthonormal bases for the ``a+`` and ``a-`` coefficient vectors.

    ``degenerate`` marks the deliberately rank-deficient (e.g. all-zero)
    bases, which skip the orthonormality check.
    """

    V_plus: np.ndarray
    V_minus: np.ndarray
    sv_plus: np.ndarray = None
    sv_minus: np.ndarray = None
    mean_plus: np.ndarray = None
    mean_minus: np.ndarray = None
    degenerate: bool = False

    def __post_init__(self):
        vp = np.atleast_2d(np.asarray(self.V_plus, dtype=float))
        vm = np.atleast_2d(np.asarray(self.V_minus, dtype=float))
        if vp.shape[0] != vm.shape[0]:
            raise ValueError("plus and minus bases must have the same number of rows")
        object.__setattr__(self, "V_plus", vp)
        object.__setattr__(self, "V_minus", vm)
        N = vp.shape[0]
        for name in ("mean_plus", "mean_minus"):
            val = getattr(self, name)
            object.__setattr__(self, name, np.zeros(N) if val is None
                               else np.asarray(val, dtype=float))
        for name in ("sv_plus", "sv_minus"):
            val = getattr(self, name)
            object.__setattr__(self, name, np.array([]) if val is None
                               else np.asarray(val, dtype=float))
        if not self.degenerate and self.orthonormality_error() > ORTHO_TOL:
            raise ValueError(f"basis is not orthonormal (error {self.orthonormality_error():.2e})")

    @property
    def N(self) -> int:
        return self.V_plus.shape[0]

    @property
    def ranks(self) -> tuple:
        return self.V_plus.shape[1], self.V_minus.shape[1]

    @classmethod
    def zero(cls, N: int, r: int = 1) -> "ReducedBasisPair":
        """A basis of ``r`` zero vectors; every lifted state is zero."""
        z = np.zeros((N, r))
        return cls(z, z.copy(), degenerate=True)

    @classmethod
    def identity(cls, N: int) -> "ReducedBasisPair":
        return cls(np.eye(N), np.eye(N))

    def orthonormality_error(self) -> float:
        err = 0.0
        for V in (self.V_plus, self.V_minus):
            r = V.shape[1]
            err = max(err, float(np.max(np.abs(V.T @ V - np.eye(r)))) if r else 0.0)
        return err

    def normalized(self, which: str = "plus") -> np.ndarray:
        sv = self.sv_plus if which == "plus" else self.sv_minus
        if sv.size == 0 or sv[0] == 0.0:
            return np.zeros_like(sv)
        return sv / sv[0]

    def save(self, directory) -> list:
        """Write the bases as whitespace-separated text with a shape header."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, V in (("basis_plus.txt", self.V_plus), ("basis_minus.txt", self.V_minus)):
            path = directory / name
            np.savetxt(path, V, fmt="%.17g", header=f"rows={V.shape[0]} cols={V.shape[1]}")
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory) -> "ReducedBasisPair":
        directory = Path(directory)
        mats = []
        for name in ("basis_plus.txt", "basis_minus.txt"):
            path = directory / name
            with open(path) as fh:
                header = fh.readline()
            try:
                dims = dict(item.split("=") for item in header.lstrip("# ").split())
                rows, cols = int(dims["rows"]), int(dims["cols"])
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}: malformed header {header.strip()!r}") from exc
            V = np.loadtxt(path, ndmin=2).reshape(rows, cols)
            mats.append(V)
        return cls(*mats)


def _rank_for_energy(sv: np.ndarray, energy: float) -> int:
    e = sv**2
    total = e.sum()
    if total == 0.0:
        return 1
    return int(np.searchsorted(np.cumsum(e) / total, energy - 1e-15) + 1)


def pod(snapshots: SnapshotSet, rank: int | None = None, energy: float | None = None,
        center: bool = False) -> ReducedBasisPair:
    """Leading left singular vectors of the ``a+`` and ``a-`` snapshot matrices.

    Parameters
    ----------
    snapshots : SnapshotSet
    rank : int, optional
        Number of modes kept for each family.
    energy : float, optional
        Alternatively keep the fewest modes whose squared singular values
        reach this fraction of the total (the larger of the two families'
        counts is used for both).
    center : bool
        Subtract the snapshot mean before the SVD; the mean is stored in the
        basis and added back on lifting.
    """
    if (rank is None) == (energy is None):
        raise ValueError("give exactly one of rank and energy")
    N, S = snapshots.plus.shape
    rmax = min(N, S)
    P, M = snapshots.plus, snapshots.minus
    mp = P.mean(axis=1) if center else np.zeros(N)
    mm = M.mean(axis=1) if center else np.zeros(N)
    Up, sp, _ = np.linalg.svd(P - mp[:, None], full_matrices=False)
    Um, sm, _ = np.linalg.svd(M - mm[:, None], full_matrices=False)
    if energy is not None:
        if not 0 < energy <= 1:
            raise ValueError("energy must lie in (0, 1]")
        rank = max(_rank_for_energy(sp, energy), _rank_for_energy(sm, energy))
    if not 1 <= rank <= rmax:
        raise ValueError(f"rank {rank} outside 1..{rmax} (N={N}, snapshots={S})")
    return ReducedBasisPair(Up[:, :rank], Um[:, :rank], sp, sm, mp, mm)


@dataclass(frozen=True, eq=False)
class ReducedState:
    t: float
    plus: np.ndarray
    minus: np.ndarray


def _check_dim(basis: ReducedBasisPair, n: int) -> None:
    if n != basis.N:
        raise ValueError(f"dimension mismatch: basis has {basis.N} rows, state has {n}")


def reduce_state(basis: ReducedBasisPair, state: CoefficientState) -> ReducedState:
    _check_dim(basis, state.plus.size)
    return ReducedState(state.t,
                        basis.V_plus.T @ (state.plus - basis.mean_plus),
                        basis.V_minus.T @ (state.minus - basis.mean_minus))


def lift_state(basis: ReducedBasisPair, rstate: ReducedState) -> CoefficientState:
    if np.size(rstate.plus) != basis.ranks[0] or np.size(rstate.minus) != basis.ranks[1]:
        raise ValueError(f"reduced state sizes ({np.size(rstate.plus)}, {np.size(rstate.minus)})"
                         f" do not match basis ranks {basis.ranks}")
    return CoefficientState(rstate.t,
                            basis.mean_plus + basis.V_plus @ rstate.plus,
                            basis.mean_minus + basis.V_minus @ rstate.minus)


def step_reduced(rstate: ReducedState, basis: ReducedBasisPair,
                 solver: RelaxationSolver) -> ReducedState:
    """Lift, apply one full-order step, project back."""
    return reduce_state(basis, solver.step(lift_state(basis, rstate)))


@dataclass
class ReducedTrajectory:
    states: list
    basis: ReducedBasisPair
    stride: int
    final: ReducedState = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def lifted(self) -> list:
        return [lift_state(self.basis, s) for s in self.states]

    @property
    def final_lifted(self) -> CoefficientState:
        return lift_state(self.basis, self.final)


def integrate_reduced(solver: RelaxationSolver, u0, basis: ReducedBasisPair, T: float,
                      stride: int | None = None) -> ReducedTrajectory:
    """March the projected scheme from ``reduce(project_initial(u0))``."""
    _check_dim(basis, solver.cfg.N)
    cfg = solver.cfg
    stride = cfg.snapshot_stride if stride is None else stride
    rstate = reduce_state(basis, solver.project_initial(u0))
    states = [rstate]
    n_steps = int(round(T / cfg.dt))
    for n in range(1, n_steps + 1):
        rstate = step_reduced(rstate, basis, solver)
        if not (np.all(np.isfinite(rstate.plus)) and np.all(np.isfinite(rstate.minus))):
            raise SolverError(f"non-finite reduced coefficients at step {n}", step=n, t=rstate.t)
        if n % stride == 0:
            states.append(rstate)
    return ReducedTrajectory(states, basis, stride, final=rstate)


def write_singular_values_csv(path, sv) -> None:
    """Columns ``index, sigma, sigma/sigma_1`` with a 1-based index."""
    sv = np.asarray(sv, dtype=float)
    top = sv[0] if sv.size and sv[0] > 0 else math.inf
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "sigma", "sigma_rel"])
        for k, s in enumerate(sv, start=1):
            writer.writerow([k, f"{s:.17g}", f"{s / top:.17g}"])
