"""ODE-RNN forward pass and the compensated outputs built on it.

Between observations the hidden state follows ``dh/dt = f(h)`` (fixed-step
RK4); at an observed time stamp it jumps through the gated cell; the
output is ``o = g(h)``.  The cell update makes ``o`` jump at observations,
and :func:`compensated_output` removes those jumps with the cubic
compensation from :mod:`cssc.spline`, either on the output or on the
hidden state.

All arrays are batched: trajectories sharing one time grid are integrated
in lockstep, so shapes are ``(B, N+1, ...)`` over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import spline as sp
from .core import (CsscError, DimensionMismatch, RunConfig, Trajectory,
                   validate_trajectory)
from .nn import autodiff as ad
from .nn.layers import (GruCell, Mlp, cell_update, init_gru, init_mlp,
                        mlp_forward, mlp_jvp)


class NonFiniteState(CsscError, FloatingPointError):
    pass


class IntervalTooShort(CsscError, ValueError):
    pass


@dataclass(frozen=True)
class OdeRnnModel:
    f: Mlp
    g: Mlp
    cell: GruCell
    config: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def init(cls, data_dim: int, config: RunConfig | None = None,
             seed: int | None = None) -> "OdeRnnModel":
        config = config or RunConfig()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        m = config.hidden_dim
        s = config.init_scale
        f = init_mlp(rng, (m, *config.f_widths, m), scale=s, last_scale=0.1 * s)
        g = init_mlp(rng, (m, *config.g_widths, data_dim), scale=s)
        cell = init_gru(rng, data_dim, m, scale=s)
        return cls(f, g, cell, config)

    @property
    def hidden_dim(self) -> int:
        return self.cell.hidden_dim

    @property
    def data_dim(self) -> int:
        return self.g.out_dim

    def parameters(self) -> dict:
        out = {}
        out.update(self.f.named_parameters("f"))
        out.update(self.g.named_parameters("g"))
        out.update(self.cell.named_parameters("cell"))
        return out

    def with_parameters(self, params: dict) -> "OdeRnnModel":
        return OdeRnnModel(Mlp.from_named(params, "f"), Mlp.from_named(params, "g"),
                           GruCell.from_named(params, "cell"), self.config)

    def with_config(self, config: RunConfig) -> "OdeRnnModel":
        return OdeRnnModel(self.f, self.g, self.cell, config)

    def dynamics(self, h):
        return mlp_forward(self.f, h)

    def readout(self, h):
        return mlp_forward(self.g, h)


@dataclass(frozen=True)
class TrajectoryBatch:
    """Trajectories that share one time grid."""

    times: np.ndarray     # (N+1,)
    values: np.ndarray    # (B, N+1, d)
    observed: np.ndarray  # (B, N+1) bool

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory]) -> "TrajectoryBatch":
        trajs = [trajs] if isinstance(trajs, Trajectory) else list(trajs)
        if not trajs:
            raise ValueError("empty batch")
        times = trajs[0].times
        for tr in trajs:
            validate_trajectory(tr)
            if tr.times.shape != times.shape or np.any(tr.times != times):
                raise DimensionMismatch("trajectories in a batch must share a grid")
            if tr.dim != trajs[0].dim:
                raise DimensionMismatch("trajectories in a batch must share a dimension")
        return cls(np.asarray(times), np.stack([tr.values for tr in trajs]),
                   np.stack([tr.observed for tr in trajs]))

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


def make_batches(dataset: Sequence[Trajectory], batch_size: int | None = None) -> list:
    """Group trajectories by grid; optionally split groups into chunks."""
    groups: dict[bytes, list] = {}
    for tr in dataset:
        groups.setdefault(tr.times.tobytes(), []).append(tr)
    out = []
    for trajs in groups.values():
        step = batch_size or len(trajs)
        for i in range(0, len(trajs), step):
            out.append(TrajectoryBatch.from_trajectories(trajs[i:i + step]))
    return out


def rk4_step(f: Callable, h, dt):
    k1 = f(h)
    k2 = f(ad.lincomb((h, k1), (1.0, 0.5 * dt)))
    k3 = f(ad.lincomb((h, k2), (1.0, 0.5 * dt)))
    k4 = f(ad.lincomb((h, k3), (1.0, dt)))
    return ad.lincomb((h, k1, k2, k3, k4), (1.0, dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0))


def _dynamics(model_or_f):
    if isinstance(model_or_f, OdeRnnModel):
        return model_or_f.dynamics
    if isinstance(model_or_f, Mlp):
        return partial(mlp_forward, model_or_f)
    return model_or_f


def integrate_interval(model_or_f, h0, t_start: float, t_end: float,
                       query_times: Sequence[float] = (), substeps: int | None = None):
    """RK4 from ``t_start`` to ``t_end`` in ``substeps`` equal steps.

    Query times inside the interval become extra step boundaries, so their
    states come from integration rather than interpolation.  Returns
    ``(states_at_queries, state_at_t_end)``.
    """
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    if substeps is None:
        substeps = model_or_f.config.substeps if isinstance(model_or_f, OdeRnnModel) else 1
    f = _dynamics(model_or_f)
    queries = np.asarray(query_times, dtype=np.float64).ravel()
    if np.any((queries < t_start) | (queries > t_end)):
        raise ValueError("query times must lie inside the interval")
    base = t_start + (t_end - t_start) * np.arange(substeps + 1) / substeps
    base[-1] = t_end
    stops = np.union1d(base, queries)
    states = {float(t_start): h0}
    h = h0
    for a, b in zip(stops[:-1], stops[1:]):
        h = rk4_step(f, h, b - a)
        states[float(b)] = h
    if not np.all(np.isfinite(ad.value(h))):
        raise NonFiniteState(f"hidden state diverged on [{t_start}, {t_end}]")
    return [states[float(q)] for q in queries], h


@dataclass
class ForwardTrace:
    """States and outputs of one forward pass over a :class:`TrajectoryBatch`.

    ``*_minus`` / ``*_plus`` are left / right limits at every grid point
    (they coincide where nothing was observed).  ``h_query`` and
    ``o_query`` are right-continuous values at ``query_times``.
    """

    model: OdeRnnModel
    batch: TrajectoryBatch
    h_minus: object
    h_plus: object
    o_minus: object
    o_plus: object
    query_times: np.ndarray
    h_query: object
    o_query: object


def forward(model: OdeRnnModel, batch, query_times=None) -> ForwardTrace:
    """Run ODE-RNN over the grid, starting from ``h = 0`` before ``t_0``."""
    if isinstance(batch, Trajectory) or isinstance(batch, (list, tuple)):
        batch = TrajectoryBatch.from_trajectories(batch)
    if batch.dim != model.data_dim or model.cell.input_dim != batch.dim:
        raise DimensionMismatch("data dimension does not match the model")
    times = batch.times
    on_grid = query_times is None
    queries = times if on_grid else np.asarray(query_times, dtype=np.float64)
    if np.any((queries < times[0]) | (queries > times[-1])):
        raise ValueError("query times must lie inside the trajectory span")
    substeps = model.config.substeps
    B = batch.size
    h = np.zeros((B, model.hidden_dim))
    h_minus, h_plus = [h], []
    off_grid: dict[float, object] = {}

    def observe(j, h_prev):
        upd = cell_update(model.cell, h_prev, batch.values[:, j, :])
        return ad.where(batch.observed[:, j, None], upd, h_prev)

    h = observe(0, h)
    h_plus.append(h)
    for j in range(times.size - 1):
        t0, t1 = times[j], times[j + 1]
        inner = () if on_grid else queries[(queries > t0) & (queries < t1)]
        states, h = integrate_interval(model, h, t0, t1, inner, substeps)
        off_grid.update(zip(map(float, inner), states))
        h_minus.append(h)
        h = observe(j + 1, h)
        h_plus.append(h)

    h_minus = ad.stack(h_minus, axis=1)
    h_plus = ad.stack(h_plus, axis=1)
    o_minus = model.readout(h_minus)
    o_plus = model.readout(h_plus)
    if on_grid:
        h_query, o_query = h_plus, o_plus
    else:
        grid_pos = {float(t): j for j, t in enumerate(times)}
        cols = [h_plus[:, grid_pos[float(q)], :] if float(q) in grid_pos else off_grid[float(q)]
                for q in queries]
        h_query = ad.stack(cols, axis=1)
        o_query = model.readout(h_query)
    return ForwardTrace(model, batch, h_minus, h_plus, o_minus, o_plus,
                        queries, h_query, o_query)


# ---------------------------------------------------------------------------
# one-sided time derivatives at knots

@dataclass
class KnotDerivatives:
    """One-sided first / second time derivatives at knots (``None`` if dropped)."""

    d1_minus: object
    d1_plus: object
    d2_minus: object
    d2_plus: object


def _analytic_side(model: OdeRnnModel, h, space: str, need_second: bool):
    fh = model.dynamics(h)
    hdd = mlp_jvp(model.f, h, fh)[1] if need_second else None
    if space == "hidden":
        return fh, hdd
    if need_second:
        _, tangents = mlp_jvp(model.g, h, ad.stack([fh, hdd], axis=0))
        return tangents[0], tangents[1]
    return mlp_jvp(model.g, h, fh)[1], None


def knot_derivatives_analytical(model: OdeRnnModel, h_minus, h_plus,
                                space: str = "output", need_second: bool = True) -> KnotDerivatives:
    """Exact first derivatives; second derivatives drop the Hessian of ``g``.

    Output space: ``o' = J_g f`` and ``o'' ~ J_g (J_f f)``.  Hidden space:
    ``h' = f`` and ``h'' = J_f f`` (exact).
    """
    d1m, d2m = _analytic_side(model, h_minus, space, need_second)
    d1p, d2p = _analytic_side(model, h_plus, space, need_second)
    return KnotDerivatives(d1m, d1p, d2m, d2p)


def knot_derivatives_numerical(model: OdeRnnModel, h_minus, h_plus, delta: float,
                               space: str = "output", need_second: bool = True) -> KnotDerivatives:
    """One-sided finite differences with step ``delta``.

    States at ``t - delta``, ``t - 2 delta`` come from RK4 steps of size
    ``-delta`` out of ``h(t-)``; those at ``t + delta``, ``t + 2 delta``
    from steps of ``+delta`` out of ``h(t+)``.
    """
    f = model.dynamics
    read = (lambda h: h) if space == "hidden" else model.readout
    m1 = rk4_step(f, h_minus, -delta)
    m2 = rk4_step(f, m1, -delta)
    p1 = rk4_step(f, h_plus, delta)
    p2 = rk4_step(f, p1, delta)
    y_m, y_m1, y_m2 = read(h_minus), read(m1), read(m2)
    y_p, y_p1, y_p2 = read(h_plus), read(p1), read(p2)
    d1m = (y_m - y_m1) / delta
    d1p = (y_p1 - y_p) / delta
    d2m = d2p = None
    if need_second:
        d2m = (y_m - 2.0 * y_m1 + y_m2) / delta ** 2
        d2p = (y_p2 - 2.0 * y_p1 + y_p) / delta ** 2
    return KnotDerivatives(d1m, d1p, d2m, d2p)


def numerical_delta(knot_times, delta: float = 1e-3) -> float:
    """The finite-difference step actually used: ``min(delta, min tau / 4)``."""
    tau = np.diff(np.asarray(knot_times), axis=-1)
    return float(min(delta, tau.min() / 4.0))


def check_delta(knot_times, delta: float) -> None:
    tau = np.diff(np.asarray(knot_times), axis=-1)
    if np.any(tau <= 2.0 * delta):
        raise IntervalTooShort(f"an interval of {tau.min()} is not longer than 2*delta={2 * delta}")


# ---------------------------------------------------------------------------
# compensation

@dataclass
class KnotInputs:
    """Per-group compensation inputs (shapes ``(G, K+1, D)``)."""

    rows: np.ndarray
    knot_index: np.ndarray
    knot_times: np.ndarray
    eps_plus: object
    eps_minus: object
    r_dot: object
    r_ddot: object
    m_first: object = None
    m_last: object = None
    derivatives: KnotDerivatives | None = None

    def knot_data(self, i: int) -> sp.KnotData:
        """Plain :class:`~cssc.spline.KnotData` for trajectory ``i`` of the group."""
        from .core import TimeGrid
        v = ad.value
        return sp.KnotData(TimeGrid(self.knot_times[i]), v(self.eps_plus)[i],
                           v(self.eps_minus)[i], v(self.r_dot)[i], v(self.r_ddot)[i])


@dataclass
class CompensatedOutput:
    """Result of :func:`compensated_output` at the query times.

    ``output`` is the final prediction ``(B, Q, d)``; ``compensation`` is
    ``c`` at the queries (output or hidden space, ``None`` without
    compensation); ``raw`` is the uncompensated ODE-RNN output.
    """

    output: object
    compensation: object
    raw: object
    trace: ForwardTrace
    space: str
    groups: list = field(default_factory=list)  # (KnotInputs, coefficient tuple)

    def splines(self) -> list:
        """Per-trajectory :class:`~cssc.spline.CompensationSpline` objects."""
        from .core import TimeGrid
        out = [None] * self.trace.batch.size
        for knots, coeffs in self.groups:
            vals = [ad.value(c) for c in coeffs]
            for i, row in enumerate(knots.rows):
                stacked = np.stack([c[i] for c in vals[:4]], axis=1)
                right = sp.right_moments(vals[4][i], ad.value(knots.r_ddot)[i])
                out[row] = sp.CompensationSpline(TimeGrid(knots.knot_times[i]), stacked,
                                                 vals[4][i], right)
        return out


def _knot_groups(observed: np.ndarray) -> list:
    groups: dict[int, list] = {}
    for b, mask in enumerate(observed):
        groups.setdefault(int(mask.sum()), []).append(b)
    out = []
    for rows in groups.values():
        rows = np.asarray(rows)
        index = np.stack([np.flatnonzero(observed[b]) for b in rows])
        out.append((rows, index))
    return out


def _gather(arr, rows, index):
    return ad.getitem(arr, (rows[:, None], index))


def build_knot_inputs(trace: ForwardTrace, rows, index, space: str,
                      config: RunConfig) -> KnotInputs:
    model, batch = trace.model, trace.batch
    knot_times = batch.times[index]
    hm = _gather(trace.h_minus, rows, index)
    hp = _gather(trace.h_plus, rows, index)
    need_second = not config.drop_ddot_o
    if config.derivative_mode == "numerical":
        delta = numerical_delta(knot_times, config.fd_delta)
        check_delta(knot_times, delta)
        der = knot_derivatives_numerical(model, hm, hp, delta, space, need_second)
    else:
        der = knot_derivatives_analytical(model, hm, hp, space, need_second)

    if space == "output":
        x = batch.values[rows[:, None], index]
        eps_plus = x - _gather(trace.o_plus, rows, index)
        eps_minus = x - _gather(trace.o_minus, rows, index)
    else:
        eps_minus = hp - hm
        eps_plus = np.zeros(ad.value(eps_minus).shape)

    r_dot = der.d1_plus - der.d1_minus
    if config.block_dot_o:
        r_dot = ad.stop_gradient(r_dot)
    if need_second:
        r_ddot = der.d2_plus - der.d2_minus
        if config.block_ddot_o:
            r_ddot = ad.stop_gradient(r_ddot)
    else:
        r_ddot = np.zeros(ad.value(r_dot).shape)

    m_first = m_last = None
    if config.strict_natural_boundary:
        if not need_second:
            raise ValueError("strict natural boundary needs second derivatives")
        m_first = -der.d2_plus[:, :1, :]
        m_last = -der.d2_minus[:, -1:, :]
    return KnotInputs(rows, index, knot_times, eps_plus, eps_minus, r_dot, r_ddot,
                      m_first, m_last, der)


def compensated_output(model: OdeRnnModel, batch, query_times=None,
                       config: RunConfig | None = None, space: str | None = None,
                       trace: ForwardTrace | None = None) -> CompensatedOutput:
    """ODE-RNN output with the cubic compensation applied in ``space``.

    ``space`` defaults to ``config.eval_space``: ``"output"`` adds ``c`` to
    ``o``, ``"hidden"`` adds ``c`` to ``h`` and decodes ``g(h + c)``, and
    ``"none"`` returns the raw ODE-RNN output.
    """
    config = config or model.config
    space = space or config.eval_space
    if trace is None:
        trace = forward(model, batch, query_times)
    batch = trace.batch
    queries = trace.query_times
    if space == "none":
        return CompensatedOutput(trace.o_query, None, trace.o_query, trace, space)

    # the last knot is the last grid point: its piece uses left limits
    at_end = queries == batch.times[-1]
    base = trace.o_query if space == "output" else trace.h_query
    base_end = trace.o_minus if space == "output" else trace.h_minus
    last = base_end[:, -1:, :]
    base = ad.where(at_end[None, :, None], last, base)

    pieces, order, groups = [], [], []
    for rows, index in _knot_groups(batch.observed):
        knots = build_knot_inputs(trace, rows, index, space, config)
        tau = np.diff(knots.knot_times, axis=-1)
        coeffs = sp.compensation_coefficients(tau, knots.eps_plus, knots.eps_minus,
                                              knots.r_dot, knots.r_ddot,
                                              knots.m_first, knots.m_last)
        c = sp.eval_pieces(coeffs[:4], knots.knot_times, queries)
        pieces.append(c)
        order.append(rows)
        groups.append((knots, coeffs))
    comp = pieces[0] if len(pieces) == 1 else ad.concatenate(pieces, axis=0)
    perm = np.concatenate(order)
    if np.any(perm != np.arange(perm.size)):
        comp = ad.getitem(comp, np.argsort(perm))
    if space == "output":
        out = base + comp
    else:
        out = model.readout(base + comp)
    return CompensatedOutput(out, comp, trace.o_query, trace, space, groups)
