import csv
import io

import numpy as np
import pytest

from cssc.core import RunConfig, Trajectory
from cssc.data import ToySpec, generate_toy
from cssc.odernn import OdeRnnModel, TrajectoryBatch, compensated_output
from cssc.train import (LengthMismatch, NonFiniteLoss, evaluate, loss, loss_and_grad,
                        predict, train, write_metrics_csv)
from oracles import dense_natural_spline, gradient_check

TINY = RunConfig(hidden_dim=4, f_widths=(8,), g_widths=(8,), substeps=1)


def tiny_data(n=6, frac=0.3, seed=0):
    return generate_toy(ToySpec(n_trajectories=n, points_per_traj=20,
                                observation_fraction=frac, seed=seed))


def test_loss_formula():
    out = np.array([[1.0], [2.0], [3.0]])
    tgt = np.array([[1.0], [1.0], [1.0]])
    comp = np.array([[0.5], [0.0], [0.0]])
    rep = loss(out, comp, tgt, alpha=10.0)
    assert rep.mse == pytest.approx(5.0 / 3.0)
    assert rep.penalty == pytest.approx(0.25 / 3.0)
    assert rep.total == pytest.approx(5.0 / 3.0 + 2.5 / 3.0)


def test_loss_without_compensation_and_length_checks():
    rep = loss(np.zeros(4), None, np.ones(4), alpha=100.0)
    assert (rep.mse, rep.penalty, rep.total) == (1.0, 0.0, 1.0)
    with pytest.raises(LengthMismatch):
        loss(np.zeros(4), None, np.ones(5), alpha=1.0)
    with pytest.raises(LengthMismatch):
        loss(np.zeros(4), np.zeros(3), np.ones(4), alpha=1.0)


def test_two_observation_gradient_matches_finite_differences():
    t = np.linspace(0, 1.5, 7)
    mask = np.zeros(7, bool)
    mask[[0, -1]] = True
    tr = Trajectory.from_arrays(t, np.cos(3 * t), mask)
    batch = TrajectoryBatch.from_trajectories([tr])
    model = OdeRnnModel.init(1, TINY, seed=1)
    report = gradient_check(model, batch, TINY, "output")
    worst = max(rel for rel, _ in report.values())
    assert worst <= 1e-4, report


def test_hidden_space_gradient():
    tr = tiny_data(1)[0]
    batch = TrajectoryBatch.from_trajectories([tr])
    cfg = TINY.with_(compensation_space="hidden")
    report = gradient_check(OdeRnnModel.init(1, cfg, seed=2), batch, cfg, "hidden")
    assert max(rel for rel, _ in report.values()) <= 1e-4


def test_blocked_jumps_change_gradient_only():
    batch = TrajectoryBatch.from_trajectories(tiny_data(2))
    model = OdeRnnModel.init(1, TINY, seed=3)
    r0, g0 = loss_and_grad(model, batch, TINY)
    r1, g1 = loss_and_grad(model, batch, TINY.with_(block_dot_o=True, block_ddot_o=True))
    assert r0.total == r1.total
    assert any(not np.allclose(g0[k], g1[k]) for k in g0)


def test_dropped_second_derivative_skips_hessian_path(monkeypatch):
    import cssc.odernn as odernn
    calls = []
    original = odernn.mlp_jvp
    monkeypatch.setattr(odernn, "mlp_jvp", lambda *a: calls.append(a) or original(*a))
    batch = TrajectoryBatch.from_trajectories(tiny_data(1))
    model = OdeRnnModel.init(1, TINY, seed=4)
    compensated_output(model, batch, config=TINY.with_(drop_ddot_o=True))
    assert all(np.ndim(a[2]) == 3 for a in calls)  # only first-derivative tangents
    compensated_output(model, batch, config=TINY)
    assert any(np.ndim(a[2]) == 4 for a in calls)


def test_training_lowers_validation_error():
    data = tiny_data(10, frac=0.5, seed=5)
    cfg = TINY.with_(epochs=15, patience=0)
    res = train(OdeRnnModel.init(1, cfg), data[:8], cfg, data[8:])
    assert len(res.history) == 15
    assert min(m.val_mse for m in res.history) < res.initial_val_mse
    assert res.history[res.best_epoch - 1].val_mse == min(m.val_mse for m in res.history)
    # returned parameters are the best epoch's
    assert evaluate(res.model, data[8:], "cssc") == pytest.approx(
        res.history[res.best_epoch - 1].val_mse, rel=1e-12)


def test_early_stopping():
    data = tiny_data(4)
    cfg = TINY.with_(epochs=200, patience=2, learning_rate=0.5)
    res = train(OdeRnnModel.init(1, cfg), data[:3], cfg, data[3:])
    assert len(res.history) < 200


def test_non_finite_loss_is_reported():
    data = tiny_data(2)
    bad = data[0]
    vals = np.array(bad.values)
    vals[np.flatnonzero(~bad.observed)[0]] = np.nan  # a supervised, unobserved target
    poisoned = Trajectory(bad.grid, vals, bad.observed)
    with pytest.raises(NonFiniteLoss):
        train(OdeRnnModel.init(1, TINY), [poisoned], TINY.with_(epochs=1))


def test_spline_baseline_matches_oracle():
    data = tiny_data(3)
    pred = []
    for tr in data:
        obs = tr.observed
        pred.append(dense_natural_spline(tr.times[obs], tr.values[obs])(tr.times))
    ref = np.mean(np.concatenate([(p - tr.values).ravel() for p, tr in zip(pred, data)]) ** 2)
    assert evaluate(None, data, "spline_baseline") == pytest.approx(ref, rel=1e-10)


def test_evaluation_modes():
    data = tiny_data(3)
    model = OdeRnnModel.init(1, TINY, seed=6)
    assert evaluate(model, data, "prehoc") == evaluate(model, data, "odernn")
    assert evaluate(model, data, "posthoc") == evaluate(model, data, "cssc")
    preds = predict(model, data, "output")
    for p, tr in zip(preds, data):
        np.testing.assert_allclose(p[tr.observed], tr.values[tr.observed], atol=1e-12)
    with pytest.raises(ValueError):
        evaluate(model, data, "latent")


def test_metrics_csv_round_trip():
    data = tiny_data(3)
    cfg = TINY.with_(epochs=2, patience=0)
    res = train(OdeRnnModel.init(1, cfg), data[:2], cfg, data[2:])
    buf = io.StringIO()
    write_metrics_csv(buf, res.history)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    assert float(rows[1]["val_mse"]) == res.history[1].val_mse
    assert rows[0]["mode"] == "cssc"
