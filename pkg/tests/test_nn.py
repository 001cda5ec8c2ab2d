import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactilebench import nn


def naive_forward(net, x):
    a = list(map(float, x))
    for layer in net.layers:
        out = []
        for i in range(layer.n_out):
            z = float(layer.b[i])
            for j in range(layer.n_in):
                z += float(layer.W[i, j]) * a[j]
            out.append(max(z, 0.0) if layer.activation == "relu" else z)
        a = out
    return np.array(a)


def small_net(seed=0, sizes=(4, 6, 5, 3), acts=("relu", "relu", "identity")):
    return nn.init_net(sizes, acts, np.random.default_rng(seed))


# -- forward ----------------------------------------------------------------

def test_zero_weights_give_bias():
    net = nn.DenseNet([nn.Layer(np.zeros((3, 4)), np.array([1.0, -2.0, 0.5]), "identity")])
    np.testing.assert_array_equal(nn.forward(net, np.arange(4.0))[0], [1.0, -2.0, 0.5])


def test_relu_clamps():
    net = nn.DenseNet([nn.Layer(np.array([[-1.0]]), np.array([0.0]), "relu")])
    assert nn.forward(net, [2.0])[0][0] == 0.0


def test_forward_matches_scalar_loops():
    net = small_net(3)
    for b in net.layers:
        b.b[:] = np.random.default_rng(1).normal(size=b.b.shape)
    x = np.random.default_rng(2).normal(size=4)
    np.testing.assert_allclose(nn.forward(net, x)[0], naive_forward(net, x), atol=1e-12)


def test_batch_rows_match_single_vectors():
    net = small_net(4)
    X = np.random.default_rng(5).normal(size=(7, 4))
    batch = nn.forward(net, X)[0]
    for i in range(7):
        np.testing.assert_allclose(batch[i], nn.forward(net, X[i])[0], atol=1e-14)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        nn.forward(small_net(), np.zeros(5))


def test_layer_chain_must_connect():
    with pytest.raises(ValueError):
        nn.DenseNet([nn.Layer(np.zeros((3, 4)), np.zeros(3)), nn.Layer(np.zeros((2, 5)), np.zeros(2))])


# -- backward ---------------------------------------------------------------

def test_identity_layer_mse_weight_gradient_closed_form():
    rng = np.random.default_rng(0)
    W, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    net = nn.DenseNet([nn.Layer(W, b, "identity")])
    x, y = rng.normal(size=4), rng.normal(size=3)
    out, cache = nn.forward(net, x)
    grads, _ = nn.backward(net, cache, nn.mse_grad(out, y))
    np.testing.assert_allclose(grads[0], 2.0 / 3 * np.outer(out - y, x), atol=1e-14)
    np.testing.assert_allclose(grads[1], 2.0 / 3 * (out - y), atol=1e-14)


def test_zero_output_gradient_zero_param_gradients():
    net = small_net()
    _, cache = nn.forward(net, np.ones(4))
    grads, dx = nn.backward(net, cache, np.zeros(3))
    assert all(not g.any() for g in grads) and not dx.any()


def test_stale_cache_rejected():
    net = small_net()
    _, cache = nn.forward(net, np.ones(4))
    with pytest.raises(ValueError, match="stale cache"):
        nn.backward(net, cache[:-1], np.zeros(3))
    other = small_net(sizes=(4, 7, 5, 3))
    with pytest.raises(ValueError, match="stale cache"):
        nn.backward(other, cache, np.zeros(3))


def test_relu_subgradient_at_zero_is_zero():
    net = nn.DenseNet([nn.Layer(np.array([[1.0]]), np.array([-1.0]), "relu")])
    out, cache = nn.forward(net, [1.0])  # pre-activation exactly 0
    grads, dx = nn.backward(net, cache, np.ones(1))
    assert grads[0][0, 0] == 0.0 and dx[0] == 0.0


def test_input_gradient_by_finite_differences():
    net = small_net(7)
    x = np.random.default_rng(8).normal(size=4)
    y = np.zeros(3)
    out, cache = nn.forward(net, x)
    _, dx = nn.backward(net, cache, nn.mse_grad(out, y))
    h = 1e-6
    num = [(nn.mse(nn.forward(net, x + h * e)[0], y) - nn.mse(nn.forward(net, x - h * e)[0], y)) / (2 * h)
           for e in np.eye(4)]
    np.testing.assert_allclose(dx, num, rtol=1e-6, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_gradcheck_random_architectures(seed, sizes):
    rng = np.random.default_rng(seed)
    acts = ["relu"] * (len(sizes) - 2) + ["identity"]
    net = nn.init_net(sizes, acts, rng)
    for layer in net.layers:
        layer.b[:] = rng.normal(0, 0.1, layer.b.shape)
    sample = (rng.normal(size=sizes[0]), rng.normal(size=sizes[-1]))
    assert nn.gradcheck(net, "mse", sample, rng) < 1e-4


def test_gradcheck_cross_entropy_tiny_net():
    rng = np.random.default_rng(1)
    net = small_net(1, sizes=(5, 8, 4), acts=("relu", "identity"))
    assert nn.gradcheck(net, "cross_entropy", (rng.normal(size=5), 2), rng) < 1e-4


def test_gradcheck_zero_loss_region_reports_zero():
    net = nn.DenseNet([nn.Layer(-np.ones((2, 3)), np.zeros(2), "relu")])
    err = nn.gradcheck(net, "mse", (np.ones(3), np.zeros(2)))
    assert err == 0.0


def test_gradcheck_catches_corrupted_backward():
    def broken(net, cache, g):
        grads, dx = nn.backward(net, cache, g)
        return [1.1 * x for x in grads], dx

    rng = np.random.default_rng(2)
    net = small_net(2)
    sample = (rng.normal(size=4), rng.normal(size=3))
    assert nn.gradcheck(net, "mse", sample, rng, backward_fn=broken) > 1e-2


# -- losses -----------------------------------------------------------------

def test_mse_examples():
    v = np.array([1.0, -2.0, 3.5])
    assert nn.mse(v, v) == 0.0
    assert nn.mse((0, 3), (4, 0)) == 12.5
    with pytest.raises(ValueError, match="length mismatch"):
        nn.mse((1, 2), (1, 2, 3))


def test_cross_entropy_uniform_logits():
    assert nn.cross_entropy(np.full(5, 0.7), 3) == pytest.approx(math.log(5), abs=1e-12)


def test_cross_entropy_stable_for_huge_logits():
    z = np.array([1e4, -1e4, 0.0, 5e3, 1e4 - 1])
    assert np.isfinite(nn.cross_entropy(z, 1))
    # logsumexp is 1e4 + log(1 + e^-1), the rest underflows
    assert nn.cross_entropy(z, 1) == pytest.approx(2e4 + math.log1p(math.exp(-1)), rel=1e-12)
    assert np.all(np.isfinite(nn.cross_entropy_grad(z, 1)))
    with pytest.raises(ValueError):
        nn.cross_entropy(z, 5)


def test_cross_entropy_batch_is_mean():
    rng = np.random.default_rng(0)
    Z, y = rng.normal(size=(6, 5)), rng.integers(0, 5, 6)
    assert nn.cross_entropy(Z, y) == pytest.approx(np.mean([nn.cross_entropy(Z[i], y[i]) for i in range(6)]))


# -- optimiser --------------------------------------------------------------

def test_first_adam_step_moves_by_lr_times_sign():
    p = [np.array([1.0, -2.0, 0.5])]
    g = [np.array([3.0, -0.01, 1e-3])]
    st_ = nn.OptimizerState.for_params(p, lr=1e-3)
    before = p[0].copy()
    nn.opt_step(st_, p, g)
    np.testing.assert_allclose(p[0] - before, -1e-3 * np.sign(g[0]), rtol=1e-4)
    assert st_.step == 1


def test_zero_gradient_leaves_params():
    p = [np.array([1.0, 2.0])]
    st_ = nn.OptimizerState.for_params(p)
    for _ in range(10):
        nn.opt_step(st_, p, [np.zeros(2)])
    np.testing.assert_array_equal(p[0], [1.0, 2.0])


def test_quadratic_decreases():
    theta = [np.array([1.0])]
    st_ = nn.OptimizerState.for_params(theta, lr=0.1)
    seen = [1.0]
    for _ in range(2):
        nn.opt_step(st_, theta, [theta[0].copy()])  # d/dθ of θ²/2
        seen.append(float(theta[0][0]))
    assert seen[0] > seen[1] > seen[2]


def test_optimizer_shape_mismatch():
    p = [np.zeros(3)]
    with pytest.raises(ValueError, match="shape mismatch"):
        nn.opt_step(nn.OptimizerState.for_params(p), p, [np.zeros(4)])


def test_training_trajectory_is_bit_deterministic():
    def run():
        rng = np.random.default_rng(9)
        net = small_net(9)
        params = net.params()
        opt = nn.OptimizerState.for_params(params, lr=1e-2)
        X, Y = rng.normal(size=(20, 4)), rng.normal(size=(20, 3))
        for _ in range(30):
            out, cache = nn.forward(net, X)
            grads, _ = nn.backward(net, cache, nn.mse_grad(out, Y))
            nn.opt_step(opt, params, grads)
        return b"".join(p.tobytes() for p in params)

    assert run() == run()


# -- file format ------------------------------------------------------------

def test_model_file_round_trip(tmp_path):
    net = small_net(11)
    path = tmp_path / "n.i2tm"
    nn.save_net(net, path)
    back = nn.load_net(path)
    for a, b in zip(net.params(), back.params()):
        np.testing.assert_array_equal(b, a.astype(np.float32).astype(float))
    assert [l.activation for l in back.layers] == [l.activation for l in net.layers]
    nn.save_net(back, tmp_path / "again.i2tm")
    assert path.read_bytes() == (tmp_path / "again.i2tm").read_bytes()


def test_model_file_header_layout():
    net = small_net(0, sizes=(2, 3), acts=("relu",))
    buf = io.BytesIO()
    nn.write_net(buf, net)
    raw = buf.getvalue()
    assert raw[:4] == b"I2TM"
    assert raw[4:12] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little")
    assert raw[12:21] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little") + bytes([1])
    assert len(raw) == 21 + 4 * (6 + 3)


def test_model_file_errors(tmp_path):
    net = small_net(1)
    path = tmp_path / "n.i2tm"
    nn.save_net(net, path)
    raw = path.read_bytes()
    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short").write_bytes(raw[:-3])
    (tmp_path / "long").write_bytes(raw + b"\0")
    with pytest.raises(nn.ModelFormatError, match="magic"):
        nn.load_net(tmp_path / "magic")
    with pytest.raises(nn.ModelFormatError, match="truncated"):
        nn.load_net(tmp_path / "short")
    with pytest.raises(nn.ModelFormatError, match="trailing"):
        nn.load_net(tmp_path / "long")
