import numpy as np
import pytest
from hypothesis import given, strategies as st

from arlane.nn import (
    Adam, AdamState, ChannelAttention, Conv2d, Dense, Fusion, RNNCell, Sequential, SpatialAttention, Tanh, Tensor,
    adam_update, mlp, rnn_step, sigmoid, soft_update,
)
from arlane.nn import checkpoint as ckpt
from arlane.nn import gradcheck
from arlane.nn.gradcheck import Probe, check_probe, numeric_grad, relative_error


class BrokenDense(Dense):
    def backward(self, g):
        out = super().backward(g)
        self.W.grad *= 1.5
        return out


def _broken(rng):
    m = BrokenDense(4, 3, rng)
    return Probe(m, {"x": rng.standard_normal((2, 4))},
                 lambda i: (m.forward(i["x"]),), lambda g: {"x": m.backward(g[0])})


# -- gradient checks -------------------------------------------------------


@pytest.mark.parametrize("layer", sorted(gradcheck.PROBES))
def test_layer_passes_gradcheck(layer):
    results = gradcheck.run_suite(n_seeds=3, probes={layer: gradcheck.PROBES[layer]})
    assert all(r.passed for r in results), [r.errors for r in results]


def test_gradcheck_catches_broken_layer():
    res = gradcheck.run_suite(n_seeds=2, probes={"broken": _broken})
    assert not any(r.passed for r in res)
    assert gradcheck.summarize(res)["broken"] > gradcheck.REL_TOL


def test_relative_error_zero_when_both_vanish():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_bptt_chain_matches_finite_differences():
    rng = np.random.default_rng(5)
    cell = RNNCell(3, 6, rng)
    T = 8
    h0 = rng.standard_normal((2, 6))
    obs = rng.standard_normal((T, 2, 3))
    G = rng.standard_normal((T, 2, 6))

    def loss():
        h, total = h0, 0.0
        for t in range(T):
            h = rnn_step(cell, h, obs[t])
            total += float(np.sum(G[t] * h))
        return total

    cell.zero_grad()
    cell.forward(h0, obs)
    dh0, dobs = cell.backward(G)
    for arr, analytic in ((h0, dh0), (obs, dobs), (cell.W_h.value, cell.W_h.grad.copy()),
                          (cell.W_o.value, cell.W_o.grad.copy()), (cell.b.value, cell.b.grad.copy())):
        assert relative_error(analytic, numeric_grad(loss, arr)) < 1e-3


# -- closed forms ----------------------------------------------------------


def test_rnn_zero_weights_gives_zero_state():
    cell = RNNCell(3, 4)
    for p in cell.params():
        p.value[...] = 0.0
    assert np.array_equal(rnn_step(cell, np.ones(4), np.ones(3)), np.zeros(4))


def test_rnn_identity_input_weights():
    cell = RNNCell(4, 4)
    cell.W_h.value[...] = 0.0
    cell.W_o.value[...] = np.eye(4)
    cell.b.value[...] = 0.0
    h = rnn_step(cell, np.zeros(4), np.full(4, 0.5))
    assert np.allclose(h, np.tanh(0.5))
    assert h[0] == pytest.approx(0.46212, abs=1e-5)


def test_rnn_shape_mismatch_raises():
    with pytest.raises(ValueError):
        rnn_step(RNNCell(3, 4), np.zeros(5), np.zeros(3))


def test_rnn_recurrent_gain_bounds_spectral_norm():
    cell = RNNCell(3, 16, np.random.default_rng(0))
    assert np.linalg.norm(cell.W_h.value, 2) == pytest.approx(0.9, rel=1e-3)


def test_zero_attention_kernel_halves_features():
    att = SpatialAttention(7, np.random.default_rng(0))
    att.conv.W.value[...] = 0.0
    att.conv.b.value[...] = 0.0
    F = np.random.default_rng(1).standard_normal((2, 3, 9, 9))
    out, mask = att.forward(F)
    assert np.all(mask == 0.5)
    assert np.array_equal(out, 0.5 * F)


def test_spatially_constant_features_give_constant_interior_mask():
    att = SpatialAttention(7, np.random.default_rng(0))
    F = np.broadcast_to(np.random.default_rng(2).standard_normal((1, 4, 1, 1)), (1, 4, 16, 16)).copy()
    _, mask = att.forward(F)
    interior = mask[0, 3:-3, 3:-3]
    assert np.allclose(interior, interior[0, 0], atol=1e-14)


@given(st.integers(0, 10_000))
def test_masks_in_open_unit_interval(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((1, 3, 8, 8)) * 5
    _, mask = SpatialAttention(7, rng).forward(F)
    assert np.all((mask > 0) & (mask < 1))
    gated = ChannelAttention(3, rng=rng).forward(F)
    assert np.all(np.abs(gated) <= np.abs(F))


@given(st.floats(-50, 50))
def test_activation_ranges(x):
    t = Tanh().forward(np.array([x]))[0]
    s = sigmoid(np.array([x]))[0]
    assert -1 <= t <= 1 and 0 <= s <= 1


def test_identity_dense():
    d = Dense(4, 4)
    d.W.value[...] = np.eye(4)
    d.b.value[...] = 0.0
    x = np.random.default_rng(0).standard_normal((3, 4))
    assert np.array_equal(d.forward(x), x)


def test_unit_1x1_conv_is_identity():
    c = Conv2d(1, 1, 1)
    c.W.value[...] = 1.0
    c.b.value[...] = 0.0
    x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
    assert np.array_equal(c.forward(x), x)


def test_forward_is_pure():
    rng = np.random.default_rng(0)
    net = mlp([3, 8, 2], rng, out_act="tanh")
    x = rng.standard_normal((4, 3))
    assert np.array_equal(net.forward(x), net.forward(x))


def test_dense_shape_check():
    with pytest.raises(ValueError):
        Dense(3, 2).forward(np.zeros((1, 4)))


def test_fusion_splits_gradient():
    rng = np.random.default_rng(0)
    f = Fusion(3, 2, 4, rng)
    out = f.forward(rng.standard_normal((2, 3)), rng.standard_normal((2, 2)))
    gv, gk = f.backward(np.ones_like(out))
    assert gv.shape == (2, 3) and gk.shape == (2, 2)


# -- optimizer and target tracking ----------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.arange(4.0))
    before = p.value.copy()
    Adam([p], 1e-3).step()
    assert np.array_equal(p.value, before)


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6), st.floats(1e-5, 1e-1))
def test_adam_first_step_bounded_by_lr(g, lr):
    p = Tensor(np.zeros(3))
    state = AdamState.for_params([p])
    adam_update([p], [np.full(3, g)], state, lr)
    assert np.all(np.abs(p.value) <= lr * (1 + 1e-6))
    assert np.all(np.sign(p.value) == -np.sign(g))


def test_adam_runs_are_identical():
    def run():
        rng = np.random.default_rng(0)
        p = Tensor(rng.standard_normal(5))
        opt = Adam([p], 1e-2)
        for _ in range(10):
            p.grad[...] = rng.standard_normal(5)
            opt.step()
        return p.value
    assert np.array_equal(run(), run())


def test_soft_update_arithmetic():
    t, o = Tensor(np.zeros(2)), Tensor(np.full(2, 2.0))
    soft_update([t], [o], 0.5)
    assert np.array_equal(t.value, np.ones(2))
    soft_update([t], [o], 1.0)
    assert np.array_equal(t.value, o.value)


def test_soft_update_rejects_bad_tau():
    with pytest.raises(ValueError):
        soft_update([Tensor(0.0)], [Tensor(1.0)], 0.0)
    with pytest.raises(ValueError):
        soft_update([Tensor(0.0)], [Tensor(1.0)], 1.5)


# -- checkpoints -----------------------------------------------------------


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    net = Sequential(Conv2d(1, 2, 3, rng=np.random.default_rng(0)), mlp([4, 3], np.random.default_rng(1)))
    blob = ckpt.dumps(ckpt.module_state(net), {"k": 1})
    tensors, meta = ckpt.loads(blob)
    assert ckpt.dumps(tensors, meta) == blob
    ckpt.save(tmp_path / "a.ckpt", tensors, meta)
    assert (tmp_path / "a.ckpt").read_bytes() == blob


def test_checkpoint_rejects_bad_input(tmp_path):
    with pytest.raises(ckpt.CheckpointError):
        ckpt.loads(b"garbage")
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "missing.ckpt")
    net = mlp([3, 2], np.random.default_rng(0))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load_module_state(net, {})
    other = mlp([4, 2], np.random.default_rng(0))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load_module_state(net, ckpt.module_state(other))


def test_load_module_state_restores_values():
    a = mlp([3, 5, 2], np.random.default_rng(0))
    b = mlp([3, 5, 2], np.random.default_rng(1))
    ckpt.load_module_state(b, ckpt.loads(ckpt.dumps(ckpt.module_state(a)))[0])
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa.value, pb.value)
