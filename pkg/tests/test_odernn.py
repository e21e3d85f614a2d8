import numpy as np
import pytest

from cssc.core import DimensionMismatch, RunConfig, Trajectory
from cssc.nn.layers import GruCell, mlp_forward
from cssc.odernn import (IntervalTooShort, NonFiniteState, OdeRnnModel, TrajectoryBatch,
                         check_delta, compensated_output, forward, integrate_interval,
                         knot_derivatives_analytical, knot_derivatives_numerical,
                         make_batches, numerical_delta, rk4_step)
from oracles import knot_limits

SMALL = RunConfig(hidden_dim=5, f_widths=(12,), g_widths=(12,), substeps=2)


def random_traj(rng, n=12, d=1, frac=0.5, jitter=True):
    t = np.linspace(0, 3, n)
    if jitter:
        t[1:-1] += rng.uniform(-0.08, 0.08, n - 2)
    mask = rng.random(n) < frac
    mask[[0, -1]] = True
    return Trajectory.from_arrays(t, rng.normal(size=(n, d)), mask)


def test_rk4_on_linear_decay():
    h = np.array([1.0])
    for _ in range(10):
        h = rk4_step(lambda v: -v, h, 0.1)
    assert abs(h[0] - np.exp(-1.0)) < 1e-6


def test_integrate_interval_queries_and_order():
    f = lambda v: -2.0 * v
    qs, end = integrate_interval(f, np.array([1.0]), 0.0, 1.0, [0.25, 0.5], substeps=64)
    np.testing.assert_allclose([qs[0][0], qs[1][0], end[0]], np.exp([-0.5, -1.0, -2.0]), rtol=1e-7)
    with pytest.raises(ValueError):
        integrate_interval(f, np.array([1.0]), 1.0, 1.0)


def test_integrate_interval_detects_blow_up():
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFiniteState):
        integrate_interval(lambda v: v * v * 1e200, np.array([1e200]), 0.0, 1.0, substeps=2)


def test_forward_unobserved_points_do_not_jump():
    rng = np.random.default_rng(0)
    model = OdeRnnModel.init(1, SMALL, seed=1)
    tr = random_traj(rng)
    trace = forward(model, tr)
    un = ~tr.observed
    np.testing.assert_array_equal(trace.h_minus[0, un], trace.h_plus[0, un])
    np.testing.assert_array_equal(trace.h_minus[0, 0], 0.0)
    assert np.any(np.abs(trace.h_plus[0, tr.observed] - trace.h_minus[0, tr.observed]) > 0)


def test_batch_matches_single_runs():
    rng = np.random.default_rng(1)
    model = OdeRnnModel.init(2, SMALL, seed=2)
    t = np.linspace(0, 2, 9)
    trajs = []
    for _ in range(3):
        mask = rng.random(9) < 0.5
        mask[[0, -1]] = True
        trajs.append(Trajectory.from_arrays(t, rng.normal(size=(9, 2)), mask))
    batched = compensated_output(model, trajs).output
    for i, tr in enumerate(trajs):
        np.testing.assert_allclose(batched[i], compensated_output(model, [tr]).output[0],
                                   atol=1e-13)


def test_off_grid_queries_agree_with_grid():
    rng = np.random.default_rng(2)
    model = OdeRnnModel.init(1, SMALL, seed=3)
    tr = random_traj(rng)
    on = compensated_output(model, [tr]).output[0]
    off = compensated_output(model, [tr], query_times=tr.times[3:6]).output[0]
    np.testing.assert_allclose(off, on[3:6], atol=1e-12)


def test_closed_update_gate_gives_smooth_ode_output():
    rng = np.random.default_rng(3)
    model = OdeRnnModel.init(1, SMALL, seed=4)
    cell = GruCell(**{**model.cell.__dict__, "b_z": np.full(SMALL.hidden_dim, -80.0)})
    model = OdeRnnModel(model.f, model.g, cell, SMALL)
    trace = forward(model, random_traj(rng))
    np.testing.assert_array_equal(trace.o_minus, trace.o_plus)


def test_analytical_first_derivative_matches_trajectory():
    model = OdeRnnModel.init(2, SMALL, seed=5)
    h0 = np.random.default_rng(4).normal(size=(1, SMALL.hidden_dim))
    der = knot_derivatives_analytical(model, h0, h0, "output", True)
    eps = 1e-4
    _, hp = integrate_interval(model, h0, 0.0, eps, substeps=4)
    hm = h0
    for _ in range(4):
        hm = rk4_step(model.dynamics, hm, -eps / 4)
    fd = (model.readout(hp) - model.readout(hm)) / (2 * eps)
    np.testing.assert_allclose(der.d1_plus, fd, rtol=1e-6, atol=1e-9)
    hidden = knot_derivatives_analytical(model, h0, h0, "hidden", True)
    fd2 = (model.dynamics(hp) - model.dynamics(hm)) / (2 * eps)
    np.testing.assert_allclose(hidden.d2_plus, fd2, rtol=1e-6, atol=1e-9)


def test_numerical_mode_is_first_order_close():
    model = OdeRnnModel.init(1, SMALL, seed=6)
    rng = np.random.default_rng(5)
    hm, hp = rng.normal(size=(2, 4, SMALL.hidden_dim))
    an = knot_derivatives_analytical(model, hm, hp, "hidden", True)
    nu = knot_derivatives_numerical(model, hm, hp, 1e-4, "hidden", True)
    np.testing.assert_allclose(nu.d1_plus, an.d1_plus, atol=1e-3)
    np.testing.assert_allclose(nu.d1_minus, an.d1_minus, atol=1e-3)
    np.testing.assert_allclose(nu.d2_plus, an.d2_plus, atol=1e-2)


def test_delta_adapts_and_is_checked():
    assert numerical_delta([0.0, 1.0, 2.0]) == 1e-3
    assert numerical_delta([0.0, 0.002, 1.0]) == pytest.approx(5e-4)
    with pytest.raises(IntervalTooShort):
        check_delta([0.0, 0.001, 1.0], 1e-3)


@pytest.mark.parametrize("mode", ["analytical", "numerical"])
def test_output_mode_is_continuous_and_interpolates(mode):
    rng = np.random.default_rng(6)
    cfg = SMALL.with_(derivative_mode=mode)
    model = OdeRnnModel.init(2, cfg, seed=7)
    tr = random_traj(rng, d=2)
    res = compensated_output(model, [tr], config=cfg)
    obs = tr.observed
    np.testing.assert_allclose(res.output[0, obs], tr.values[obs], atol=1e-12)
    if mode == "analytical":
        (lim,) = knot_limits(model, TrajectoryBatch.from_trajectories([tr]), config=cfg)
        gap = np.abs(lim["value"][0, 1:-1] - lim["value"][1, 1:-1]).max()
        assert gap <= 1e-8
        np.testing.assert_allclose(lim["d1"][0, 1:-1], lim["d1"][1, 1:-1], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(lim["d2"][0, 1:-1], lim["d2"][1, 1:-1], rtol=1e-6, atol=1e-9)


def test_hidden_mode_state_is_continuous():
    rng = np.random.default_rng(7)
    cfg = SMALL.with_(compensation_space="hidden")
    model = OdeRnnModel.init(1, cfg, seed=8)
    tr = random_traj(rng)
    (lim,) = knot_limits(model, TrajectoryBatch.from_trajectories([tr]), space="hidden")
    assert np.abs(lim["value"][0, 1:-1] - lim["value"][1, 1:-1]).max() <= 1e-8
    res = compensated_output(model, [tr], config=cfg)
    h_base = np.array(res.trace.h_query)
    h_base[:, -1] = res.trace.h_minus[:, -1]  # the end point takes the left limit
    np.testing.assert_allclose(res.output, mlp_forward(model.g, h_base + res.compensation),
                               atol=1e-14)


def test_no_compensation_returns_raw_output():
    rng = np.random.default_rng(8)
    model = OdeRnnModel.init(1, SMALL, seed=9)
    res = compensated_output(model, [random_traj(rng)], space="none")
    assert res.compensation is None
    np.testing.assert_array_equal(res.output, res.raw)


def test_make_batches_groups_by_grid():
    rng = np.random.default_rng(9)
    a = [random_traj(rng, jitter=False) for _ in range(5)]
    b = [random_traj(rng, n=7, jitter=False) for _ in range(2)]
    batches = make_batches(a + b, batch_size=2)
    assert sorted(x.size for x in batches) == [1, 2, 2, 2]


def test_dimension_mismatch():
    model = OdeRnnModel.init(2, SMALL)
    with pytest.raises(DimensionMismatch):
        forward(model, random_traj(np.random.default_rng(0), d=1))


def test_numerical_jump_error_is_first_order_in_delta():
    model = OdeRnnModel.init(1, SMALL, seed=10)
    rng = np.random.default_rng(11)
    hm, hp = rng.normal(size=(2, 6, SMALL.hidden_dim))
    an = knot_derivatives_analytical(model, hm, hp, "output", False)
    r_an = an.d1_plus - an.d1_minus
    errs = []
    for delta in (1e-2, 1e-3, 1e-4):
        nu = knot_derivatives_numerical(model, hm, hp, delta, "output", False)
        errs.append(np.abs((nu.d1_plus - nu.d1_minus) - r_an).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 10.0, rtol=0.1)
