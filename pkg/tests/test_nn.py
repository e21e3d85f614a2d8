import json

import numpy as np
import pytest

from cssc.core import DimensionMismatch
from cssc.nn import autodiff as ad
from cssc.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from cssc.nn.layers import (GruCell, Mlp, cell_update, init_gru, init_mlp, jvp_f,
                            jvp_g, mlp_forward, mlp_jvp, vjp_g)
from cssc.nn.optim import AdaMax
from oracles import central_difference

rng = np.random.default_rng(0)
MLP = init_mlp(rng, (4, 7, 5, 3))


def jacobian_fd(fn, v, eps=1e-6):
    cols = []
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = eps
        cols.append((fn(v + e) - fn(v - e)) / (2 * eps))
    return np.stack(cols, axis=-1)


def test_forward_shapes_and_linear_last_layer():
    v = rng.normal(size=(6, 4))
    out = mlp_forward(MLP, v)
    assert out.shape == (6, 3)
    w, b = MLP.weights[-1], MLP.biases[-1]
    hidden = np.tanh(np.tanh(v @ MLP.weights[0]) @ MLP.weights[1])
    np.testing.assert_allclose(out, hidden @ w + b, atol=1e-14)


def test_jvp_matches_finite_differences():
    v = rng.normal(size=4)
    tangent = rng.normal(size=4)
    out, dout = mlp_jvp(MLP, v, tangent)
    J = jacobian_fd(lambda x: mlp_forward(MLP, x), v)
    np.testing.assert_allclose(out, mlp_forward(MLP, v))
    np.testing.assert_allclose(dout, J @ tangent, atol=1e-8)


def test_jvp_with_several_tangents():
    v = rng.normal(size=(5, 4))
    tangents = rng.normal(size=(2, 5, 4))
    _, both = mlp_jvp(MLP, v, tangents)
    for k in range(2):
        np.testing.assert_allclose(both[k], mlp_jvp(MLP, v, tangents[k])[1], atol=1e-14)


def test_vjp_is_transpose_of_jvp():
    v = rng.normal(size=(3, 4))
    t = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 3))
    lhs = np.sum(jvp_g(MLP, v, t) * w)
    rhs = np.sum(vjp_g(MLP, v, w) * t)
    assert abs(lhs - rhs) < 1e-12


def test_jvp_f_alias():
    f = init_mlp(rng, (3, 6, 3))
    h, v = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(jvp_f(f, h, v), jacobian_fd(lambda x: mlp_forward(f, x), h) @ v,
                               atol=1e-8)


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        mlp_forward(MLP, np.zeros(5))
    with pytest.raises(DimensionMismatch):
        mlp_jvp(MLP, np.zeros(4), np.zeros(3))
    cell = init_gru(rng, 2, 4)
    with pytest.raises(DimensionMismatch):
        cell_update(cell, np.zeros(3), np.zeros(2))


def test_gru_closed_gate_keeps_state():
    cell = init_gru(rng, 2, 4)
    cell = GruCell(**{**cell.__dict__, "b_z": np.full(4, -60.0)})
    h = rng.normal(size=(3, 4))
    np.testing.assert_allclose(cell_update(cell, h, rng.normal(size=(3, 2))), h, atol=1e-20)


def test_gru_matches_hand_formula():
    cell = init_gru(rng, 2, 3)
    h, x = rng.normal(size=3), rng.normal(size=2)
    sig = lambda a: 1 / (1 + np.exp(-a))
    z = sig(x @ cell.w_z + h @ cell.u_z + cell.b_z)
    r = sig(x @ cell.w_r + h @ cell.u_r + cell.b_r)
    n = np.tanh(x @ cell.w_n + (r * h) @ cell.u_n + cell.b_n)
    np.testing.assert_allclose(cell_update(cell, h, x), z * n + (1 - z) * h, atol=1e-15)


def test_parameter_gradients_through_jvp():
    v = rng.normal(size=(2, 4))
    t = rng.normal(size=(2, 4))
    params = MLP.named_parameters("m")

    def loss_of(p):
        m = Mlp.from_named(p, "m")
        out, d = mlp_jvp(m, v, t)
        return ad.sum(out * out) + ad.sum(ad.tanh(d))

    with ad.Tape() as tape:
        vs = {k: tape.variable(a) for k, a in params.items()}
        total = loss_of(vs)
    grads = dict(zip(vs, tape.gradient(total, list(vs.values()))))
    name = "m.1.weight"
    fd = central_difference(lambda w: float(loss_of({**params, name: w})), params[name])
    np.testing.assert_allclose(grads[name], fd, atol=1e-7)


def test_adamax_first_step_is_signed_lr():
    opt = AdaMax(learning_rate=0.1)
    p = {"w": np.array([1.0, -2.0, 0.5])}
    g = {"w": np.array([0.3, -4.0, 0.0])}
    new = opt.step(p, g)
    np.testing.assert_allclose(new["w"], [0.9, -1.9, 0.5], atol=1e-7)


def test_adamax_matches_reference_recurrence():
    opt = AdaMax(learning_rate=0.02, beta1=0.9, beta2=0.999, eps=1e-8)
    p = np.array([0.5])
    m = u = 0.0
    ref = 0.5
    for t, g in enumerate([1.0, -0.5, 0.25, 2.0], start=1):
        p = opt.step({"p": p}, {"p": np.array([g])})["p"]
        m = 0.9 * m + 0.1 * g
        u = max(0.999 * u, abs(g))
        ref -= 0.02 / (1 - 0.9 ** t) * m / (u + 1e-8)
    assert p[0] == pytest.approx(ref, abs=1e-15)


def test_adamax_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        AdaMax().step({"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_checkpoint_round_trip(tmp_path):
    tensors = {"a": rng.normal(size=(3, 2)), "b": np.arange(4.0)}
    path = save_checkpoint(tmp_path / "model.json", tensors, {"mode": "cssc"})
    loaded, meta = load_checkpoint(path)
    assert meta == {"mode": "cssc"}
    for k in tensors:
        np.testing.assert_array_equal(loaded[k], tensors[k])


def test_checkpoint_detects_truncation(tmp_path):
    path = save_checkpoint(tmp_path / "m.json", {"a": np.ones(5)}, {})
    doc = json.loads(path.read_text())
    blob = path.parent / doc["blob"]
    blob.write_bytes(blob.read_bytes()[:16])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_foreign_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"hello": 1}')
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
