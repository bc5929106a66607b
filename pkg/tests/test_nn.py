import numpy as np
import pytest

from gradcaps import nn
from gradcaps.nn import DenseNet, GradTape, backward, forward

from .gradcheck import fd_param_grads, fd_input_grad, max_rel_error


def matmul_oracle(net, x_row):
    """Straight-line per-neuron evaluation, no numpy matmul."""
    h = list(map(float, x_row))
    for k in range(net.n_layers):
        W, b = net.params[2 * k], net.params[2 * k + 1]
        out = []
        for j in range(W.shape[1]):
            z = float(b[0, j])
            for i in range(W.shape[0]):
                z += h[i] * float(W[i, j])
            act = net.activation(k)
            out.append(max(z, 0.0) if act == "relu" else (np.tanh(z) if act == "tanh" else z))
        h = out
    return h


def test_zero_parameters_give_zero_output():
    net = DenseNet([3, 5, 2])
    for p in net.params:
        p[...] = 0.0
    assert np.all(forward(net, np.random.default_rng(1).normal(size=(4, 3))) == 0.0)


def test_identity_layer():
    net = DenseNet([3, 3])
    net.params[0][...] = np.eye(3)
    net.params[1][...] = 0.0
    x = np.array([[1.5, -2.0, 0.25]])
    np.testing.assert_array_equal(forward(net, x), x)


@pytest.mark.parametrize("hidden", ["relu", "tanh"])
def test_forward_matches_straight_line_oracle(hidden):
    net = DenseNet([2, 4, 3], hidden_activation=hidden, rng=np.random.default_rng(0))
    y = forward(net, np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(y[0], matmul_oracle(net, [1.0, 1.0]), rtol=1e-14, atol=1e-15)


def test_forward_is_pure():
    net = DenseNet([4, 8, 8, 2], rng=np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(16, 4))
    a, b = forward(net, x), forward(net, x)
    assert a.tobytes() == b.tobytes()


def test_forward_shape_mismatch():
    net = DenseNet([3, 4, 1])
    with pytest.raises(ValueError):
        forward(net, np.zeros((2, 4)))


def test_forward_non_finite_is_hard_error():
    net = DenseNet([2, 3, 1])
    with pytest.raises(nn.NonFiniteError):
        forward(net, np.array([[np.nan, 0.0]]))


def test_sum_loss_identity_net_input_grad_is_ones():
    net = DenseNet([3, 3])
    net.params[0][...] = np.eye(3)
    net.params[1][...] = 0.0
    tape = GradTape()
    y = forward(net, np.array([[0.3, -0.1, 2.0], [1.0, 1.0, 1.0]]), tape)
    _, gx = backward(tape, np.ones_like(y))
    np.testing.assert_array_equal(gx, np.ones((2, 3)))


def test_zero_output_grad_gives_zero_grads():
    net = DenseNet([3, 6, 2], rng=np.random.default_rng(2))
    tape = GradTape()
    y = forward(net, np.ones((5, 3)), tape)
    grads, gx = backward(tape, np.zeros_like(y))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)
    assert [g.shape for g in grads] == [p.shape for p in net.params]


def test_tape_reuse_is_an_error():
    net = DenseNet([2, 2])
    tape = GradTape()
    y = forward(net, np.ones((1, 2)), tape)
    backward(tape, np.ones_like(y))
    with pytest.raises(nn.TapeError):
        backward(tape, np.ones_like(y))
    with pytest.raises(nn.TapeError):
        forward(net, np.ones((1, 2)), tape)


def test_backward_shape_mismatch():
    net = DenseNet([2, 3])
    tape = GradTape()
    forward(net, np.ones((4, 2)), tape)
    with pytest.raises(ValueError):
        backward(tape, np.ones((4, 2)))


@pytest.mark.parametrize("instance", range(100))
def test_backward_matches_finite_differences(instance):
    rng = np.random.default_rng(1000 + instance)
    sizes = [int(rng.integers(1, 4)), int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(1, 3))]
    net = DenseNet(sizes, hidden_activation=["relu", "tanh"][instance % 2],
                   output_activation=["identity", "tanh"][instance % 3 == 0], rng=rng)
    x = rng.normal(size=(3, sizes[0]))
    w = rng.normal(size=(3, sizes[-1]))

    def loss():
        return float(np.sum(w * forward(net, x)))

    tape = GradTape()
    forward(net, x, tape)
    grads, gx = backward(tape, w)
    assert max_rel_error(grads, fd_param_grads(loss, net.params)) < 1e-4
    assert max_rel_error([gx], [fd_input_grad(lambda xx: float(np.sum(w * forward(net, xx))), x)]) < 1e-4


def test_adam_zero_grad_fresh_state_is_noop():
    p = [np.array([[1.0, -2.0]]), np.array([[3.0]])]
    before = [q.copy() for q in p]
    nn.adam_step(p, [np.zeros_like(q) for q in p], nn.AdamState.zeros_like(p), lr=0.1)
    for a, b in zip(p, before):
        np.testing.assert_array_equal(a, b)


def test_adam_first_step_moves_by_lr_sign():
    # m1 = 0.1, v1 = 0.001; bias-corrected m/v = 1, 1 -> step = lr / (1 + eps)
    p = [np.array([[0.0]])]
    nn.adam_step(p, [np.array([[1.0]])], nn.AdamState.zeros_like(p), lr=0.1)
    np.testing.assert_allclose(p[0][0, 0], -0.1 / (1.0 + 1e-8), rtol=1e-12)


def test_adam_symmetric_params_get_identical_updates():
    p = [np.array([[0.5, 0.5]])]
    st = nn.AdamState.zeros_like(p)
    for g in (0.3, -1.2, 4.0):
        nn.adam_step(p, [np.array([[g, g]])], st, lr=0.01)
    assert p[0][0, 0] == p[0][0, 1]


def test_adam_shape_mismatch():
    p = [np.zeros((2, 2))]
    with pytest.raises(ValueError):
        nn.adam_step(p, [np.zeros((2, 3))], nn.AdamState.zeros_like(p))


def test_adam_never_introduces_non_finite():
    rng = np.random.default_rng(5)
    p = [rng.normal(size=(3, 3))]
    st = nn.AdamState.zeros_like(p)
    for _ in range(200):
        nn.adam_step(p, [rng.normal(size=(3, 3)) * 10.0 ** rng.integers(-12, 12)], st, lr=1e-3)
        assert np.isfinite(p[0]).all()
    with pytest.raises(nn.NonFiniteError):
        nn.adam_step(p, [np.full((3, 3), np.inf)], st)


def test_gaussian_head_zero_features():
    mean, log_std = nn.gaussian_head(np.zeros((1, 2)))
    assert mean[0, 0] == 0.0
    assert nn.squash(mean, np.array([-2.0]), np.array([2.0]))[0, 0] == 0.0
    assert nn.squash(mean, np.array([1.0]), np.array([3.0]))[0, 0] == 2.0


def test_gaussian_head_clamps_log_std():
    _, log_std = nn.gaussian_head(np.array([[0.0, -50.0], [0.0, 7.0]]))
    assert log_std[0, 0] == -20.0 and log_std[1, 0] == 2.0


def test_gaussian_head_rejects_non_finite():
    with pytest.raises(nn.NonFiniteError):
        nn.gaussian_head(np.array([[np.inf, 0.0]]))


def test_sampled_action_reproducible():
    from gradcaps.agents import Policy

    def draw():
        pol = Policy(2, 1, (8, 8), [-2.0], [2.0], rng=np.random.default_rng(7))
        a, logp, _ = pol.sample(np.array([[0.1, -0.4]]), np.random.default_rng(11))
        return a.tobytes() + logp.tobytes()

    assert draw() == draw()


def test_soft_update_is_convex_combination():
    rng = np.random.default_rng(8)
    online, target = DenseNet([3, 4, 2], rng=rng), DenseNet([3, 4, 2], rng=rng)
    before = [p.copy() for p in target.params]
    nn.soft_update(target, online, 0.3)
    for t, b, o in zip(target.params, before, online.params):
        np.testing.assert_allclose(t, 0.3 * o + 0.7 * b, rtol=1e-14)
    nn.soft_update(target, online, 1.0)
    for t, o in zip(target.params, online.params):
        np.testing.assert_array_equal(t, o)


def test_checkpoint_dict_round_trip():
    net = DenseNet([2, 3, 1], rng=np.random.default_rng(9))
    other = DenseNet.from_dict(net.to_dict())
    for a, b in zip(net.params, other.params):
        assert a.tobytes() == b.tobytes()
