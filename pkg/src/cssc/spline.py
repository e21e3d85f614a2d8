"""Piecewise-cubic compensation that makes ``c + o`` a C2 interpolant.

Given a piecewise-smooth curve ``o`` with one-sided values and derivatives
at the knots, the compensation ``c`` is the unique piecewise cubic such
that ``c + o`` passes through the data, has continuous first and second
derivatives at interior knots, and has zero second derivative of ``c`` at
both ends.  With ``o = 0`` this is the ordinary natural cubic spline.

The numerical core (:func:`compensation_coefficients`,
:func:`eval_pieces`) works on batched arrays with leading axes and accepts
tape variables, so training differentiates straight through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .core import CsscError, TimeGrid, Trajectory, validate_trajectory
from .nn import autodiff as ad


class IncompleteKnotData(CsscError, ValueError):
    pass


class OutOfDomain(CsscError, ValueError):
    pass


def moment_matrix(tau):
    """Diagonals ``(sub, diag, sup)`` of the moment system for intervals ``tau``.

    Row ``k-1`` (knot ``k = 1..K-1``) reads
    ``mu_k M_{k-1} + 2 M_k + lambda_k M_{k+1}`` with
    ``mu_k = tau_{k-1} / (tau_{k-1} + tau_k)`` and ``lambda_k = 1 - mu_k``.
    """
    tau = np.asarray(tau, dtype=np.float64)
    span = tau[..., :-1] + tau[..., 1:]
    mu = tau[..., :-1] / span
    lam = tau[..., 1:] / span
    diag = np.full(mu.shape, 2.0)
    return mu[..., 1:], diag, lam[..., :-1], mu, lam


def moment_rhs(tau, eps_plus, eps_minus, r_dot, r_ddot):
    """Right-hand side ``d_k`` for ``k = 1..K-1``, shape ``(..., K-1, D)``.

    ``r_ddot`` at the last knot must already carry the value that stands in
    for ``M_K + r_ddot_K``'s jump part; callers zero it by convention.
    """
    tau = np.asarray(tau, dtype=np.float64)
    t3 = tau[..., None]
    slope = (eps_minus[..., 1:, :] - eps_plus[..., :-1, :]) / t3
    span = (tau[..., :-1] + tau[..., 1:])[..., None]
    jumps = (6.0 * r_dot[..., 1:-1, :]
             - 2.0 * r_ddot[..., 1:-1, :] * t3[..., :-1, :]
             - r_ddot[..., 2:, :] * t3[..., 1:, :])
    return (6.0 * (slope[..., 1:, :] - slope[..., :-1, :]) + jumps) / span


def compensation_coefficients(tau, eps_plus, eps_minus, r_dot, r_ddot,
                              m_first=None, m_last=None):
    """Cubic coefficients of every piece.

    Knot quantities have shape ``(..., K+1, D)`` and ``tau`` has shape
    ``(..., K)``.  ``m_first`` is the second derivative of ``c`` at the left
    end and ``m_last`` its left-limit second derivative at the right end
    (both default to zero, the natural boundary).  Only interior entries of
    ``r_dot`` and ``r_ddot`` are used.

    Returns ``(a3, a2, a1, a0, moments)``: the coefficients, each of shape
    ``(..., K, D)``, of ``c_k(t) = a3 s^3 + a2 s^2 + a1 s + a0`` with
    ``s = t - t_k``, and the moments ``M_0..M_K`` with shape ``(..., K+1, D)``.
    """
    tau = np.asarray(tau, dtype=np.float64)
    K = tau.shape[-1]
    lead = np.broadcast_shapes(ad.value(eps_plus).shape[:-2], tau.shape[:-1])
    D = ad.value(eps_plus).shape[-1]
    zero_end = np.zeros(lead + (1, D))
    m_first = zero_end if m_first is None else ad.reshape(m_first, lead + (1, D))
    m_last = zero_end if m_last is None else ad.reshape(m_last, lead + (1, D))
    t3 = tau[..., None]

    if K > 1:
        sub, diag, sup, mu, lam = moment_matrix(tau)
        interior = ad.concatenate([ad.getitem(r_ddot, (Ellipsis, slice(0, K), slice(None))),
                                   np.zeros(lead + (1, D))], axis=-2)
        rhs = moment_rhs(tau, eps_plus, eps_minus, r_dot, interior)
        first_row = np.zeros(K - 1)
        first_row[0] = 1.0
        last_row = np.zeros(K - 1)
        last_row[-1] = 1.0
        rhs = (rhs - mu[..., :1, None] * first_row[:, None] * m_first
               - lam[..., -1:, None] * last_row[:, None] * m_last)
        m_inner = ad.tridiagonal_solve(sub, diag, sup, rhs)
        m_left = ad.concatenate([m_first, m_inner], axis=-2)
        m_right_hat = ad.concatenate([m_inner + r_ddot[..., 1:K, :], m_last], axis=-2)
        moments = ad.concatenate([m_first, m_inner, m_last], axis=-2)
    else:
        m_left = m_first
        m_right_hat = m_last
        moments = ad.concatenate([m_first, m_last], axis=-2)

    e_left = eps_plus[..., :K, :]
    slope = (eps_minus[..., 1:, :] - e_left) / t3
    a3 = (m_right_hat - m_left) / (6.0 * t3)
    a2 = 0.5 * m_left
    a1 = slope - t3 * (m_right_hat + 2.0 * m_left) / 6.0
    return a3, a2, a1, e_left, moments


def locate(knots, t):
    """Piece index for each query: half-open ``[t_k, t_{k+1})``, last piece closed."""
    knots = np.asarray(knots)
    t = np.asarray(t)
    if knots.ndim == 1:
        idx = np.searchsorted(knots, t, side="right") - 1
    else:
        idx = np.stack([np.searchsorted(k, t, side="right") - 1 for k in knots.reshape(-1, knots.shape[-1])])
        idx = idx.reshape(knots.shape[:-1] + t.shape)
    return np.clip(idx, 0, knots.shape[-1] - 2)


def eval_pieces(coeffs, knots, t, order: int = 0):
    """Evaluate batched piecewise cubics at shared query times ``t``.

    ``coeffs`` is ``(a3, a2, a1, a0)`` with shapes ``(B, K, D)`` (or
    ``(K, D)``); ``knots`` has shape ``(B, K+1)`` (or ``(K+1,)``).
    """
    a3, a2, a1, a0 = coeffs
    knots = np.asarray(knots, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    piece = locate(knots, t)
    if knots.ndim == 1:
        index = (piece,)
        s = (t - knots[piece])[:, None]
    else:
        rows = np.arange(knots.shape[0])[:, None]
        index = (rows, piece)
        s = (t[None, :] - np.take_along_axis(knots, piece, axis=-1))[..., None]
    c3, c2, c1, c0 = (ad.getitem(a, index) for a in (a3, a2, a1, a0))
    if order == 0:
        return ((c3 * s + c2) * s + c1) * s + c0
    if order == 1:
        return (3.0 * c3 * s + 2.0 * c2) * s + c1
    if order == 2:
        return 6.0 * c3 * s + 2.0 * c2
    raise ValueError("order must be 0, 1 or 2")


@dataclass(frozen=True)
class KnotData:
    """Per-knot inputs of the compensation, each of shape ``(n+1, d)``.

    ``eps_plus[k] = x_k - o(t_k+)`` and ``eps_minus[k] = x_k - o(t_k-)``;
    ``r_dot`` / ``r_ddot`` hold the jumps ``o'(t_k+) - o'(t_k-)`` and
    ``o''(t_k+) - o''(t_k-)``.  ``eps_minus[0]``, ``eps_plus[n]`` and the
    end entries of the jumps are never read.
    """

    grid: TimeGrid
    eps_plus: np.ndarray
    eps_minus: np.ndarray
    r_dot: np.ndarray
    r_ddot: np.ndarray

    def __post_init__(self):
        n1 = len(self.grid)
        for name in ("eps_plus", "eps_minus", "r_dot", "r_ddot"):
            arr = getattr(self, name)
            if arr is None:
                raise IncompleteKnotData(f"{name} is missing")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != n1:
                raise IncompleteKnotData(f"{name} has {arr.shape[0]} knots, grid has {n1}")
            if not np.all(np.isfinite(arr[1:-1])):
                raise IncompleteKnotData(f"{name} has non-finite interior entries")
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.eps_plus.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int = 1) -> "KnotData":
        z = np.zeros((len(grid), dim))
        return cls(grid, z, z.copy(), z.copy(), z.copy())


def right_moments(moments, r_ddot):
    """``c''`` at the right end of every piece: ``M_{k+1} + r_ddot_{k+1}``, last one ``M_n``."""
    right = np.array(moments[1:], dtype=np.float64)
    right[:-1] += np.asarray(r_ddot, dtype=np.float64)[1:-1]
    return right


@dataclass(frozen=True)
class CompensationSpline:
    """Piecewise cubic on a grid; ``coeffs[k]`` rows are ``a3, a2, a1, a0``.

    ``moments`` are ``c''`` at the knots from the right (``M_0 .. M_n``,
    with ``M_n`` the left limit at the end).  When ``right`` (the left
    limits ``c''(t_{k+1}-)`` per piece) is present, second derivatives are
    interpolated linearly between the two end values of each piece, which
    reproduces the boundary moments exactly.
    """

    grid: TimeGrid
    coeffs: np.ndarray   # (n, 4, d)
    moments: np.ndarray  # (n+1, d)
    right: np.ndarray | None = None  # (n, d)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    def piece(self, k: int, t, order: int = 0) -> np.ndarray:
        """Evaluate piece ``k`` at ``t`` without restricting to its interval."""
        a3, a2, a1, a0 = self.coeffs[k]
        s = np.asarray(t, dtype=np.float64) - self.grid.points[k]
        if order == 0:
            return ((a3 * s + a2) * s + a1) * s + a0
        if order == 1:
            return (3 * a3 * s + 2 * a2) * s + a1
        if order == 2:
            return 6 * a3 * s + 2 * a2
        raise ValueError("order must be 0, 1 or 2")

    def __call__(self, t, order: int = 0):
        return _evaluate(self, t, order)


def assemble_system(knots: KnotData) -> linalg.TridiagonalSystem:
    """Moment system for the interior knots under the natural convention."""
    tau = knots.grid.intervals
    n = tau.size
    if n < 2:
        return linalg.TridiagonalSystem(np.zeros(0), np.zeros(0), np.zeros(0),
                                        np.zeros((0, knots.dim)))
    sub, diag, sup, _, _ = moment_matrix(tau)
    r_ddot = knots.r_ddot.copy()
    r_ddot[-1] = 0.0
    rhs = moment_rhs(tau, knots.eps_plus, knots.eps_minus, knots.r_dot, r_ddot)
    return linalg.TridiagonalSystem(sub, diag, sup, rhs)


def solve_compensation(knots: KnotData, strict_natural_boundary: bool = False,
                       o_ddot_start=None, o_ddot_end=None) -> CompensationSpline:
    """Solve for the compensation spline.

    By default the moments at both ends are zero.  With
    ``strict_natural_boundary`` they are set to ``-o''(t_0+)`` and
    ``-o''(t_n-)`` instead, which makes the compensated curve itself
    natural; the two one-sided second derivatives must then be given.
    """
    m_first = m_last = None
    if strict_natural_boundary:
        if o_ddot_start is None or o_ddot_end is None:
            raise IncompleteKnotData("strict boundary needs o'' at both ends")
        m_first = -np.asarray(o_ddot_start, dtype=np.float64).reshape(1, knots.dim)
        m_last = -np.asarray(o_ddot_end, dtype=np.float64).reshape(1, knots.dim)
    a3, a2, a1, a0, moments = compensation_coefficients(
        knots.grid.intervals, knots.eps_plus, knots.eps_minus, knots.r_dot,
        knots.r_ddot, m_first, m_last)
    coeffs = np.stack([a3, a2, a1, a0], axis=1)
    coeffs.setflags(write=False)
    return CompensationSpline(knots.grid, coeffs, moments,
                              right_moments(moments, knots.r_ddot))


def _evaluate(spline: CompensationSpline, t, order: int):
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    lo, hi = spline.grid.start, spline.grid.end
    if np.any((t_arr < lo) | (t_arr > hi)) or not np.all(np.isfinite(t_arr)):
        raise OutOfDomain(f"query outside [{lo}, {hi}]")
    if order == 2 and spline.right is not None:
        knots = spline.grid.points
        k = locate(knots, t_arr)
        tau = (knots[k + 1] - knots[k])[:, None]
        s = (t_arr - knots[k])[:, None]
        out = 2.0 * spline.coeffs[k, 1, :] * ((tau - s) / tau) + spline.right[k] * (s / tau)
        return out[0] if scalar else out
    coeffs = tuple(spline.coeffs[:, i, :] for i in range(4))
    out = eval_pieces(coeffs, spline.grid.points, t_arr, order=order)
    return out[0] if scalar else out


def eval_compensation(spline: CompensationSpline, t):
    return _evaluate(spline, t, 0)


def eval_compensation_deriv(spline: CompensationSpline, t, order: int):
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    return _evaluate(spline, t, order)


def natural_spline(traj: Trajectory) -> CompensationSpline:
    """Natural cubic spline through the observed samples of ``traj``."""
    validate_trajectory(traj)
    obs = traj.observed_only()
    x = obs.values
    zero = np.zeros_like(x)
    knots = KnotData(obs.grid, x, x, zero, zero.copy())
    return solve_compensation(knots)
