"""Circulant matrices stored by their first row.

The matrix represented by a first row ``c`` has entries ``C[i, j] = c[(j - i) % N]``,
so each row is the previous one rotated right by one position.  Its
eigenvalues are the DFT of ``c``::

    Lambda_m = sum_k c[k] exp(-2 pi i m k / N)
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Circulant",
    "SpectrumReport",
    "SingularityCheck",
    "SingularMatrixError",
    "solve_rank1",
]

DEFAULT_TOL = 1e-10

# Sherman-Morrison is only used when the circulant part is at least this well
# conditioned; below it the update cancels too many digits.
_SM_MIN_RATIO = 1e-8


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a solve is requested for a (numerically) singular matrix."""

    def __init__(self, message, min_abs=None, mode=None):
        super().__init__(message)
        self.min_abs = min_abs
        self.mode = mode


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    min_abs: float
    argmin: int
    max_abs: float


@dataclass(frozen=True)
class SingularityCheck:
    singular: bool
    nullity: int
    ratio: float  # min |Lambda| / max |Lambda|

    def __bool__(self):
        return self.singular


@dataclass(frozen=True, eq=False)
class Circulant:
    """Real circulant matrix defined by its first row."""

    row: np.ndarray

    def __post_init__(self):
        row = np.array(self.row, dtype=float).ravel()
        if row.size == 0:
            raise ValueError("a circulant matrix needs at least one entry")
        row.flags.writeable = False
        object.__setattr__(self, "row", row)

    @property
    def n(self) -> int:
        return self.row.size

    @cached_property
    def _rspec(self):
        return np.fft.rfft(self.row)

    def to_dense(self) -> np.ndarray:
        i = np.arange(self.n)
        return self.row[(i[None, :] - i[:, None]) % self.n]

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"dimension mismatch: matrix is {self.n}x{self.n}, vector {v.shape}")
        return v

    def matvec(self, v) -> np.ndarray:
        v = self._check(v)
        # C v is the cyclic cross-correlation of the first row with v
        return np.fft.irfft(np.conj(self._rspec) * np.fft.rfft(v), self.n)

    def rmatvec(self, v) -> np.ndarray:
        v = self._check(v)
        return np.fft.irfft(self._rspec * np.fft.rfft(v), self.n)

    def eigenvalues(self) -> SpectrumReport:
        lam = np.fft.fft(self.row)
        mag = np.abs(lam)
        m = int(np.argmin(mag))
        return SpectrumReport(lam, float(mag[m]), m, float(mag.max()))

    def is_singular(self, tol: float = DEFAULT_TOL) -> SingularityCheck:
        """Relative test ``min |Lambda_m| <= tol * max |Lambda_m|``."""
        if tol <= 0:
            raise ValueError("tol must be positive")
        mag = np.abs(np.fft.fft(self.row))
        top = mag.max()
        if top == 0.0:
            return SingularityCheck(True, self.n, 0.0)
        nullity = int(np.count_nonzero(mag <= tol * top))
        return SingularityCheck(nullity > 0, nullity, float(mag.min() / top))

    def solve(self, rhs, tol: float = DEFAULT_TOL) -> np.ndarray:
        rhs = self._check(rhs)
        spec = self._rspec
        mag = np.abs(spec)
        top = mag.max()
        m = int(np.argmin(mag))
        if top == 0.0 or mag[m] <= tol * top:
            raise SingularMatrixError(
                f"circulant matrix is singular (|Lambda_{m}| = {mag[m]:.3e})",
                min_abs=float(mag[m]), mode=m)
        return np.fft.irfft(np.fft.rfft(rhs) / np.conj(spec), self.n)

    def rotate(self, k: int) -> "Circulant":
        """Return ``P^k C``: the first row rotated right by ``k``."""
        return Circulant(np.roll(self.row, int(k)))

    def __add__(self, other):
        if isinstance(other, Circulant):
            return Circulant(self.row + other.row)
        return NotImplemented

    def __mul__(self, s):
        return Circulant(self.row * float(s))

    __rmul__ = __mul__


def _shift_sign(v: np.ndarray):
    """Return s in {+1, -1} if ``roll(v, -1) == s v``, else None."""
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return None
    rolled = np.roll(v, -1)
    for s in (1.0, -1.0):
        if np.max(np.abs(rolled - s * v)) <= 1e-13 * scale:
            return s
    return None


def solve_rank1(C: Circulant, u, w, rho: float, rhs, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve ``(C + rho u w^T) x = rhs``.

    When ``u w^T`` is itself circulant (both vectors are eigenvectors of the
    cyclic shift with the same eigenvalue) the corrected matrix is solved by
    the DFT directly.  Otherwise the Sherman-Morrison formula is used on a
    well conditioned ``C``, with a dense fallback when ``C`` is (nearly)
    singular.
    """
    rhs = C._check(rhs)
    if rho == 0.0:
        return C.solve(rhs, tol)
    u = C._check(u)
    w = C._check(w)

    su, sw = _shift_sign(u), _shift_sign(w)
    if su is not None and su == sw:
        return Circulant(C.row + rho * u[0] * w).solve(rhs, tol)

    check = C.is_singular(tol)
    if check.ratio > _SM_MIN_RATIO:
        y = C.solve(rhs, tol)
        z = C.solve(u, tol)
        denom = 1.0 + rho * np.dot(w, z)
        scale = 1.0 + abs(rho * np.dot(w, z))
        if abs(denom) <= tol * scale:
            raise SingularMatrixError("rank-1 corrected matrix is singular")
        return y - z * (rho * np.dot(w, y) / denom)

    A = C.to_dense() + rho * np.outer(u, w)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= tol * sv[0]:
        raise SingularMatrixError(
            f"rank-1 corrected matrix is singular (sigma_min/sigma_max = {sv[-1] / sv[0]:.3e})",
            min_abs=float(sv[-1]))
    return np.linalg.solve(A, rhs)
