import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from o2orl.nncore import (AdamState, MlpNet, NonFiniteGradient, ShapeError, adam_step,
                          finite_difference_check, load_net, param_count, save_net, soft_update)

layer_sizes = st.lists(st.integers(1, 16), min_size=2, max_size=4)


def test_zero_weights_output_bias():
    net = MlpNet([3, 5, 2])
    net.biases[-1][:] = [0.25, -1.5]
    for x in ([0, 0, 0], [1, -2, 3.5]):
        assert_array_equal(net(np.array(x, float)), [0.25, -1.5])


def test_hand_computed_1_2_1():
    net = MlpNet([1, 2, 1])
    net.weights[0][:] = [[1.0, -1.0]]
    net.biases[0][:] = [0.0, 0.5]
    net.weights[1][:] = [[2.0], [3.0]]
    net.biases[1][:] = [0.1]
    # x=2: pre=(2, -1.5) -> relu (2, 0) -> 2*2 + 0.1
    assert net(np.array([2.0]))[0] == pytest.approx(4.1, abs=1e-15)
    # x=-1: pre=(-1, 1.5) -> relu (0, 1.5) -> 3*1.5 + 0.1
    assert net(np.array([-1.0]))[0] == pytest.approx(4.6, abs=1e-15)


@settings(max_examples=50)
@given(layer_sizes, st.floats(1.0, 1e3), st.integers(0, 2**31))
def test_tanh_head_strictly_inside_unit_box(sizes, scale, seed):
    rng = np.random.default_rng(seed)
    net = MlpNet(sizes, "tanh", rng.normal(size=param_count(sizes)) * scale)
    out = net(rng.normal(size=(8, sizes[0])) * scale)
    assert np.all(out > -1.0) and np.all(out < 1.0)


def test_shape_error_names_dims():
    net = MlpNet([4, 3, 2])
    with pytest.raises(ShapeError, match="expected last dim 4.*\\(3,\\)"):
        net(np.zeros(3))
    with pytest.raises(ShapeError):
        net.backward(np.zeros(4), np.zeros(3))


def test_backward_linear():
    net = MlpNet([1, 1], params=np.array([0.7, -0.2]))  # w, b
    grad, dx = net.backward(np.array([3.0]), np.array([1.0]))
    assert_array_equal(grad, [3.0, 1.0])
    assert_array_equal(dx, [0.7])


def test_backward_4_8_8_2_matches_finite_differences():
    rng = np.random.default_rng(7)
    for head in ("identity", "tanh"):
        net = MlpNet.init([4, 8, 8, 2], rng, head)
        rep = finite_difference_check(net, rng.normal(size=4), rng.normal(size=2), h=1e-5)
        assert rep.max_rel_error < 1e-4


def test_batched_gradient_is_sum_of_rows():
    rng = np.random.default_rng(3)
    net = MlpNet.init([3, 6, 2], rng, "tanh")
    x, up = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    g_batch, dx_batch = net.backward(x, up)
    rows = [net.backward(x[i], up[i]) for i in range(5)]
    np.testing.assert_allclose(g_batch, sum(g for g, _ in rows), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(dx_batch, np.stack([d for _, d in rows]), rtol=1e-12)


def test_relu_subgradient_zero_at_zero():
    net = MlpNet([2, 3, 1])  # all-zero params: hidden pre-activations are exactly 0
    net.weights[1][:] = 1.0
    grad, dx = net.backward(np.array([1.0, 2.0]), np.array([1.0]))
    n_first = 2 * 3 + 3
    assert_array_equal(grad[:n_first], 0.0)
    assert_array_equal(dx, 0.0)


def test_adam_zero_gradient_fixed_point():
    net = MlpNet.init([2, 4, 1], np.random.default_rng(0))
    before = net.flatten()
    state = AdamState.for_net(net)
    adam_step(net, np.zeros_like(before), state, lr=0.1)
    assert_array_equal(net.params, before)
    assert_array_equal(state.m, 0.0)
    assert_array_equal(state.v, 0.0)
    assert state.step == 1


def test_adam_first_and_second_step_by_hand():
    net = MlpNet([1, 1], params=np.array([1.0, 0.0]))
    state = AdamState.for_net(net)
    g = np.array([2.0, 0.0])
    adam_step(net, g, state, lr=0.01)
    # m=0.2, v=0.004 -> m_hat=2, v_hat=4 -> w -= 0.01 * 2 / (2 + 1e-8)
    w1 = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8)
    assert net.params[0] == pytest.approx(w1, abs=1e-15)
    assert net.params[0] == pytest.approx(0.99, abs=1e-8)
    adam_step(net, g, state, lr=0.01)
    # m=0.38, v=0.007996 -> m_hat=0.38/0.19=2, v_hat=0.007996/0.001999=4
    assert state.m[0] == pytest.approx(0.38, abs=1e-15)
    assert state.v[0] == pytest.approx(0.007996, abs=1e-15)
    assert net.params[0] == pytest.approx(w1 - 0.01 * 2.0 / (2.0 + 1e-8), abs=1e-14)
    assert state.step == 2


def test_adam_rejects_non_finite_with_layer():
    net = MlpNet.init([2, 3, 2], np.random.default_rng(0))
    g = np.zeros_like(net.params)
    g[-1] = np.nan  # last bias entry lives in layer 1
    state = AdamState.for_net(net)
    with pytest.raises(NonFiniteGradient) as info:
        adam_step(net, g, state, 1e-3)
    assert info.value.layer == 1
    assert state.step == 0


def test_soft_update_cases():
    rng = np.random.default_rng(0)
    online = MlpNet.init([3, 4, 2], rng)
    target = MlpNet.init([3, 4, 2], rng)
    before = target.flatten()
    soft_update(target, online, 0.0)
    assert_array_equal(target.params, before)
    soft_update(target, online, 1.0)
    assert_array_equal(target.params, online.params)

    zero, one = MlpNet([2, 2]), MlpNet([2, 2], params=np.ones(6))
    soft_update(zero, one, 0.005)
    assert_array_equal(zero.params, 0.005)
    with pytest.raises(ShapeError):
        soft_update(MlpNet([2, 3]), MlpNet([2, 2]), 0.5)


@given(layer_sizes, st.integers(0, 2**31))
def test_flatten_unflatten_round_trip(sizes, seed):
    rng = np.random.default_rng(seed)
    net = MlpNet.init(sizes, rng)
    vec = rng.normal(size=param_count(sizes))
    net.unflatten(vec)
    assert_array_equal(net.flatten(), vec)
    # views track the flat vector: first weight entry is first flat entry
    assert net.weights[0][0, 0] == vec[0]
    assert net.biases[-1][-1] == vec[-1]


@given(layer_sizes)
def test_param_count_pure_function_of_sizes(sizes):
    net = MlpNet(sizes)
    assert net.params.size == param_count(sizes)
    assert [w.shape for w in net.weights] == list(zip(sizes[:-1], sizes[1:]))


def test_forward_deterministic():
    rng = np.random.default_rng(11)
    net = MlpNet.init([5, 16, 16, 3], rng, "tanh")
    x = rng.normal(size=(32, 5))
    assert net(x).tobytes() == net(x).tobytes()
    assert net.copy()(x).tobytes() == net(x).tobytes()


def test_checkpoint_round_trip(tmp_path):
    net = MlpNet.init([4, 7, 2], np.random.default_rng(2), "tanh")
    save_net(net, tmp_path / "net.npz")
    back = load_net(tmp_path / "net.npz")
    assert back.layer_sizes == net.layer_sizes
    assert back.output_activation == "tanh"
    assert_array_equal(back.params, net.params)
