"""tanh MLPs, a GRU-style update cell, and exact Jacobian-vector products.

Weights are stored as ``(fan_in, fan_out)`` so a batch of row vectors maps
as ``a @ W + b``.  Any weight may be a :class:`~cssc.nn.autodiff.Var`, in
which case every product below is recorded and differentiable, including
the Jacobian-vector products used for output time derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DimensionMismatch
from . import autodiff as ad


@dataclass(frozen=True)
class Mlp:
    """Affine layers with tanh between them; the last layer is affine."""

    weights: tuple
    biases: tuple

    @property
    def in_dim(self) -> int:
        return ad.value(self.weights[0]).shape[0]

    @property
    def out_dim(self) -> int:
        return ad.value(self.weights[-1]).shape[1]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def named_parameters(self, prefix: str) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.{i}.weight"] = w
            out[f"{prefix}.{i}.bias"] = b
        return out

    @classmethod
    def from_named(cls, params: dict, prefix: str) -> "Mlp":
        weights, biases, i = [], [], 0
        while f"{prefix}.{i}.weight" in params:
            weights.append(params[f"{prefix}.{i}.weight"])
            biases.append(params[f"{prefix}.{i}.bias"])
            i += 1
        return cls(tuple(weights), tuple(biases))


def init_mlp(rng: np.random.Generator, sizes, scale: float = 1.0,
             last_scale: float | None = None) -> Mlp:
    """Gaussian init with variance ``scale**2 / fan_in``; zero biases."""
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = scale if (last_scale is None or i < len(sizes) - 2) else last_scale
        weights.append(rng.normal(0.0, s / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(weights), tuple(biases))


def _check_in(mlp: Mlp, v):
    if ad.value(v).shape[-1] != mlp.in_dim:
        raise DimensionMismatch(
            f"input has trailing dimension {ad.value(v).shape[-1]}, expected {mlp.in_dim}")


def mlp_forward(mlp: Mlp, v):
    _check_in(mlp, v)
    a = v
    last = mlp.depth - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = ad.affine(a, w, b)
        if i < last:
            a = ad.tanh(a)
    return a


def mlp_jvp(mlp: Mlp, v, tangent):
    """Return ``(mlp(v), J(v) @ tangent)``.

    ``tangent`` may carry extra leading axes (several directions at once);
    they broadcast against the batch shape of ``v``.
    """
    _check_in(mlp, v)
    if ad.value(tangent).shape[-1] != mlp.in_dim:
        raise DimensionMismatch("tangent dimension does not match input")
    a, da = v, tangent
    last = mlp.depth - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = ad.affine(a, w, b)
        da = ad.affine(da, w)
        if i < last:
            a = ad.tanh(a)
            da = (1.0 - a * a) * da
    return a, da


def jvp_f(mlp_f: Mlp, h, v):
    """``(df/dh)(h) @ v``."""
    return mlp_jvp(mlp_f, h, v)[1]


def jvp_g(mlp_g: Mlp, h, v):
    """``(dg/dh)(h) @ v``, the time derivative of ``g(h(t))`` when ``v = dh/dt``."""
    return mlp_jvp(mlp_g, h, v)[1]


def vjp_g(mlp_g: Mlp, h, w):
    """``(dg/dh)(h)^T @ w`` by a hand-written backward sweep."""
    _check_in(mlp_g, h)
    if ad.value(w).shape[-1] != mlp_g.out_dim:
        raise DimensionMismatch("cotangent dimension does not match output")
    acts = []
    a = h
    last = mlp_g.depth - 1
    for i, (wt, b) in enumerate(zip(mlp_g.weights, mlp_g.biases)):
        a = ad.affine(a, wt, b)
        if i < last:
            a = ad.tanh(a)
            acts.append(a)
    delta = w
    for i in range(last, -1, -1):
        delta = ad.affine(delta, ad.swapaxes(mlp_g.weights[i], -1, -2))
        if i > 0:
            act = acts[i - 1]
            delta = delta * (1.0 - act * act)
    return delta


@dataclass(frozen=True)
class GruCell:
    """Gated update ``h+ = z * n + (1 - z) * h-``.

    ``z`` is the update gate: driving its bias very negative leaves the
    hidden state untouched by the observation.
    """

    w_z: object
    u_z: object
    b_z: object
    w_r: object
    u_r: object
    b_r: object
    w_n: object
    u_n: object
    b_n: object

    @property
    def input_dim(self) -> int:
        return ad.value(self.w_z).shape[0]

    @property
    def hidden_dim(self) -> int:
        return ad.value(self.u_z).shape[0]

    def named_parameters(self, prefix: str) -> dict:
        return {f"{prefix}.{k}": getattr(self, k) for k in _GRU_FIELDS}

    @classmethod
    def from_named(cls, params: dict, prefix: str) -> "GruCell":
        return cls(**{k: params[f"{prefix}.{k}"] for k in _GRU_FIELDS})


_GRU_FIELDS = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n")


def init_gru(rng: np.random.Generator, input_dim: int, hidden_dim: int,
             scale: float = 1.0) -> GruCell:
    def w(rows):
        return rng.normal(0.0, scale / np.sqrt(rows), size=(rows, hidden_dim))
    z = np.zeros(hidden_dim)
    return GruCell(w(input_dim), w(hidden_dim), z.copy(),
                   w(input_dim), w(hidden_dim), z.copy(),
                   w(input_dim), w(hidden_dim), z.copy())


def cell_update(cell: GruCell, h_minus, x):
    if ad.value(h_minus).shape[-1] != cell.hidden_dim:
        raise DimensionMismatch("hidden state does not match the cell")
    if ad.value(x).shape[-1] != cell.input_dim:
        raise DimensionMismatch("observation does not match the cell input")
    z = ad.sigmoid(ad.affine(x, cell.w_z, cell.b_z) + ad.affine(h_minus, cell.u_z))
    r = ad.sigmoid(ad.affine(x, cell.w_r, cell.b_r) + ad.affine(h_minus, cell.u_r))
    n = ad.tanh(ad.affine(x, cell.w_n, cell.b_n) + ad.affine(r * h_minus, cell.u_n))
    return z * n + (1.0 - z) * h_minus
