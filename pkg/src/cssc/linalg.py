"""Tridiagonal solves for the moment system, plus a dense test oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CsscError


class NotDiagonallyDominant(CsscError, ValueError):
    pass


class SingularMatrix(CsscError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TridiagonalSystem:
    """``A @ M = rhs`` with ``A`` given by its three diagonals.

    ``sub[i]`` sits at row ``i + 1``, column ``i``; ``sup[i]`` at row ``i``,
    column ``i + 1``.  ``rhs`` may be a vector or an ``(size, k)`` matrix of
    right-hand sides sharing one factorisation.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        for name in ("sub", "diag", "sup", "rhs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.diag.shape[-1]
        if self.sub.shape[-1] != max(n - 1, 0) or self.sup.shape[-1] != max(n - 1, 0):
            raise ValueError("off-diagonals must have length size - 1")
        if self.rhs.shape[0] != n:
            raise ValueError("rhs must have one row per unknown")

    @property
    def size(self) -> int:
        return self.diag.shape[-1]

    def dense(self) -> np.ndarray:
        n = self.size
        A = np.diag(self.diag)
        if n > 1:
            A[np.arange(1, n), np.arange(n - 1)] = self.sub
            A[np.arange(n - 1), np.arange(1, n)] = self.sup
        return A

    def transposed(self) -> "TridiagonalSystem":
        return TridiagonalSystem(self.sup, self.diag, self.sub, self.rhs)

    def check_dominance(self) -> None:
        off = np.zeros_like(self.diag)
        off[..., 1:] += np.abs(self.sub)
        off[..., :-1] += np.abs(self.sup)
        if not np.all(np.abs(self.diag) > off):
            row = int(np.argmin(np.abs(self.diag) - off))
            raise NotDiagonallyDominant(f"row {row} is not strictly diagonally dominant")


def thomas(sub, diag, sup, rhs):
    """Batched Thomas algorithm without pivoting.

    Coefficient arrays have shape ``(..., n)`` / ``(..., n-1)``; ``rhs`` has
    shape ``(..., n, k)`` and every column is solved with the same forward
    sweep.  Requires a diagonally dominant matrix.
    """
    sub = np.asarray(sub, dtype=np.float64)
    diag = np.asarray(diag, dtype=np.float64)
    sup = np.asarray(sup, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = diag.shape[-1]
    out = np.empty(np.broadcast_shapes(rhs.shape, diag.shape + rhs.shape[-1:]))
    if n == 0:
        return out
    cp = np.empty(diag.shape[:-1] + (max(n - 1, 0),))
    denom = diag[..., 0]
    out[..., 0, :] = rhs[..., 0, :] / denom[..., None]
    for i in range(1, n):
        cp[..., i - 1] = sup[..., i - 1] / denom
        denom = diag[..., i] - sub[..., i - 1] * cp[..., i - 1]
        out[..., i, :] = (rhs[..., i, :] - sub[..., i - 1, None] * out[..., i - 1, :]) / denom[..., None]
    for i in range(n - 2, -1, -1):
        out[..., i, :] -= cp[..., i, None] * out[..., i + 1, :]
    return out


def _solve(sys: TridiagonalSystem, rhs: np.ndarray) -> np.ndarray:
    sys.check_dominance()
    rhs = np.asarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 1
    col = rhs[:, None] if vector else rhs
    x = thomas(sys.sub, sys.diag, sys.sup, col)
    return x[:, 0] if vector else x


def solve_thomas(sys: TridiagonalSystem) -> np.ndarray:
    """Solve ``A @ M = rhs`` in O(size)."""
    return _solve(sys, sys.rhs)


def solve_thomas_transposed(sys: TridiagonalSystem, rhs) -> np.ndarray:
    """Solve ``A.T @ y = rhs``; used for the adjoint of the moment solve."""
    return _solve(sys.transposed(), rhs)


def solve_dense_oracle(matrix, rhs) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a dense copy."""
    A = np.array(matrix, dtype=np.float64)
    b = np.array(rhs, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape[0] != n:
        raise ValueError("matrix must be square and match rhs")
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    scale = np.max(np.abs(A)) if n else 0.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[piv, col]) <= 1e-14 * scale or A[piv, col] == 0.0:
            raise SingularMatrix(f"zero pivot in column {col}")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        factors = A[col + 1:, col] / A[col, col]
        A[col + 1:, col:] -= factors[:, None] * A[col, col:]
        b[col + 1:] -= factors[:, None] * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - A[row, row + 1:] @ x[row + 1:]) / A[row, row]
    return x[:, 0] if vector else x
