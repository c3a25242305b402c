import numpy as np
import pytest

from modules.errors import ValidationError
from modules.network import (
    Activation,
    LayerSpec,
    NetworkParams,
    backward,
    default_architecture,
    forward,
    init_params,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)
from modules.numerics import Rng


def _single_layer(w, b, act="identity"):
    w = np.asarray(w, dtype=float)
    spec = LayerSpec(w.shape[1], w.shape[0], act)
    return NetworkParams([spec], [w], [np.asarray(b, dtype=float)])


# ----------------------------------------------------------------------
# アーキテクチャ・初期化
# ----------------------------------------------------------------------
def test_default_architecture_mirrors_encoder():
    enc, dec = default_architecture(784, 3, (1000, 1000))
    assert [(s.in_dim, s.out_dim) for s in enc] == [(784, 1000), (1000, 1000), (1000, 3)]
    assert [(s.in_dim, s.out_dim) for s in dec] == [(3, 1000), (1000, 1000), (1000, 784)]
    assert enc[-1].activation is Activation.IDENTITY
    assert dec[-1].activation is Activation.IDENTITY
    assert all(s.activation is Activation.RELU for s in enc[:-1] + dec[:-1])


def test_default_architecture_sigmoid_output():
    _, dec = default_architecture(4, 2, (8,), output_activation="sigmoid")
    assert dec[-1].activation is Activation.SIGMOID


def test_layer_chain_must_connect():
    specs = [LayerSpec(2, 3), LayerSpec(4, 1)]
    with pytest.raises(ValidationError, match="連結しません"):
        init_params(specs, Rng(0))


def test_init_params_shapes_and_determinism():
    specs, _ = default_architecture(5, 2, (16,))
    p1 = init_params(specs, Rng(3))
    p2 = init_params(specs, Rng(3))
    assert [w.shape for w in p1.weights] == [(16, 5), (2, 16)]
    assert all(np.all(b == 0) for b in p1.biases)
    for a, b in zip(p1.arrays(), p2.arrays()):
        np.testing.assert_array_equal(a, b)


def test_he_init_scale():
    p = init_params([LayerSpec(400, 500, "relu"), LayerSpec(500, 300, "identity")], Rng(9))
    assert np.std(p.weights[0]) == pytest.approx(np.sqrt(2.0 / 400), rel=0.1)
    assert np.std(p.weights[1]) == pytest.approx(np.sqrt(1.0 / 500), rel=0.1)


# ----------------------------------------------------------------------
# 順伝播
# ----------------------------------------------------------------------
def test_identity_network_passes_input_through(np_rng):
    net = _single_layer(np.eye(3), np.zeros(3))
    x = np_rng.normal(size=(4, 3))
    out, _ = forward(net, x)
    np.testing.assert_array_equal(out, x)


def test_relu_clamps_negative_outputs():
    net = _single_layer([[1.0], [-1.0]], [0.0, 0.0], "relu")
    out, _ = forward(net, [[2.0]])
    np.testing.assert_array_equal(out, [[2.0, 0.0]])


def test_scalar_network_oracle():
    # 1→1→1: tanh(0.5x + 0.1) を 2 倍して −1
    net = NetworkParams(
        [LayerSpec(1, 1, "tanh"), LayerSpec(1, 1, "identity")],
        [np.array([[0.5]]), np.array([[2.0]])],
        [np.array([0.1]), np.array([-1.0])],
    )
    out, _ = forward(net, [[1.0], [-2.0]])
    np.testing.assert_allclose(out[:, 0], [2.0 * np.tanh(0.6) - 1.0, 2.0 * np.tanh(-0.9) - 1.0], rtol=1e-12)


def test_forward_rejects_wrong_input_dim():
    net = _single_layer(np.eye(2), np.zeros(2))
    with pytest.raises(ValidationError, match="入力次元"):
        forward(net, np.zeros((3, 3)))


def test_forward_is_row_permutation_equivariant(np_rng):
    enc, _ = default_architecture(4, 2, (8, 8))
    net = init_params(enc, Rng(1))
    x = np_rng.normal(size=(10, 4))
    perm = np_rng.permutation(10)
    out, _ = forward(net, x)
    out_p, _ = forward(net, x[perm])
    np.testing.assert_allclose(out_p, out[perm], rtol=1e-12, atol=1e-12)


# ----------------------------------------------------------------------
# 損失・逆伝播
# ----------------------------------------------------------------------
def test_mse_loss_examples():
    loss, grad = mse_loss([[1.0]], [[3.0]])
    assert loss == 4.0
    np.testing.assert_array_equal(grad, [[4.0]])
    loss, grad = mse_loss([[0.0, 0.0]], [[1.0, -1.0]])
    assert loss == 1.0
    np.testing.assert_array_equal(grad, [[1.0, -1.0]])


def _chain_loss(nets, x, target):
    out = x
    for net in nets:
        out, _ = forward(net, out)
    return mse_loss(target, out)[0]


def _assert_chain_matches_finite_differences(nets, x, target, h=1e-6):
    # nets を順に合成した MSE の勾配（各ネットのパラメータと入力）を中心差分と比較
    traces, out = [], x
    for net in nets:
        out, tr = forward(net, out)
        traces.append(tr)
    _, g = mse_loss(target, out)
    grads = []
    for net, tr in zip(reversed(nets), reversed(traces)):
        g_net, g = backward(net, tr, g)
        grads.insert(0, g_net)

    for i, (net, g_net) in enumerate(zip(nets, grads)):
        arrays = net.arrays()
        for k, (a, ga) in enumerate(zip(arrays, g_net.arrays())):
            fd = np.zeros_like(a)
            for idx in np.ndindex(a.shape):
                plus = [b.copy() for b in arrays]
                minus = [b.copy() for b in arrays]
                plus[k][idx] += h
                minus[k][idx] -= h
                lp = _chain_loss(nets[:i] + [net.with_arrays(plus)] + nets[i + 1 :], x, target)
                lm = _chain_loss(nets[:i] + [net.with_arrays(minus)] + nets[i + 1 :], x, target)
                fd[idx] = (lp - lm) / (2 * h)
            np.testing.assert_allclose(ga, fd, rtol=1e-5, atol=1e-8, err_msg=f"net {i} array {k}")

    fd_in = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd_in[idx] = (_chain_loss(nets, xp, target) - _chain_loss(nets, xm, target)) / (2 * h)
    np.testing.assert_allclose(g, fd_in, rtol=1e-5, atol=1e-8)


def _away_from_relu_kinks(nets, x, margin=1e-5):
    out = x
    for net in nets:
        out, tr = forward(net, out)
        for s, z in zip(net.specs, tr.pre_activations):
            if s.activation is Activation.RELU and np.min(np.abs(z)) < margin:
                return False
    return True


@pytest.mark.parametrize("act", list(Activation))
def test_backward_matches_finite_differences(act):
    net = init_params([LayerSpec(3, 8, act), LayerSpec(8, 2, act)], Rng(21))
    x = np.random.default_rng(0).normal(size=(5, 3))
    target = np.random.default_rng(1).uniform(0.0, 1.0, size=(5, 2))
    assert _away_from_relu_kinks([net], x)
    _assert_chain_matches_finite_differences([net], x, target)


@pytest.mark.parametrize("hidden", ["relu", "tanh", "sigmoid"])
def test_stacked_encoder_decoder_matches_finite_differences(hidden):
    enc_specs, dec_specs = default_architecture(3, 2, (6,), hidden_activation=hidden, output_activation="sigmoid")
    enc = init_params(enc_specs, Rng(31))
    dec = init_params(dec_specs, Rng(32))
    x = np.random.default_rng(2).normal(size=(4, 3))
    target = np.random.default_rng(3).uniform(0.0, 1.0, size=(4, 3))
    assert _away_from_relu_kinks([enc, dec], x)
    _assert_chain_matches_finite_differences([enc, dec], x, target)


@pytest.mark.parametrize("act", ["relu", "tanh", "sigmoid"])
def test_deep_composition_stays_finite(act):
    # 深さ 2 のブロックを 100 回合成（200 層）
    block = [LayerSpec(16, 16, act), LayerSpec(16, 16, "identity")]
    net = init_params(block * 100, Rng(17))
    out, trace = forward(net, np.random.default_rng(4).normal(size=(32, 16)))
    assert len(trace.activations) == 200
    assert all(np.all(np.isfinite(a)) for a in trace.pre_activations + trace.activations)
    assert np.all(np.isfinite(out))


def test_backward_zero_upstream_gives_zero_gradients(np_rng):
    net = init_params([LayerSpec(3, 4, "relu"), LayerSpec(4, 2, "identity")], Rng(2))
    out, trace = forward(net, np_rng.normal(size=(6, 3)))
    grads, g_in = backward(net, trace, np.zeros_like(out))
    assert all(np.all(a == 0) for a in grads.arrays())
    assert np.all(g_in == 0)


def test_backward_identity_layer_passes_gradient(np_rng):
    net = _single_layer(np.eye(3), np.zeros(3))
    x = np_rng.normal(size=(4, 3))
    out, trace = forward(net, x)
    g = np_rng.normal(size=out.shape)
    grads, g_in = backward(net, trace, g)
    np.testing.assert_array_equal(g_in, g)
    np.testing.assert_allclose(grads.weights[0], g.T @ x)
    np.testing.assert_allclose(grads.biases[0], g.sum(axis=0))


# ----------------------------------------------------------------------
# チェックポイント
# ----------------------------------------------------------------------
def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    enc_specs, dec_specs = default_architecture(6, 2, (5,), hidden_activation="tanh", output_activation="sigmoid")
    enc = init_params(enc_specs, Rng(4))
    dec = init_params(dec_specs, Rng(5))
    path = save_checkpoint(tmp_path / "ckpt.json", enc, dec, {"epoch": 3})
    enc2, dec2, meta = load_checkpoint(path)
    assert meta == {"epoch": 3}
    assert enc2.specs == enc.specs and dec2.specs == dec.specs
    for a, b in zip(enc.arrays() + dec.arrays(), enc2.arrays() + dec2.arrays()):
        np.testing.assert_array_equal(a, b)
    assert not (tmp_path / "ckpt.json.tmp").exists()


def test_load_checkpoint_rejects_foreign_json(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else", "version": 1}', encoding="utf-8")
    with pytest.raises(ValidationError, match="形式"):
        load_checkpoint(path)
