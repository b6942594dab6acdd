import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from darqn import tensor as T
from darqn.errors import ContractError, DimensionError, DomainError, NumericError
from darqn.tensor import Tape, Tensor

from oracles import central_difference, rel_err, softmax_mp


def tape_grads(fn, *tensors):
    with Tape() as tape:
        loss = fn()
    g = tape.backward(loss)
    return [g.get_grad(t) for t in tensors]


def check_fd(fn, *tensors, tol=1e-4):
    analytic = tape_grads(fn, *tensors)
    numeric = central_difference(lambda: float(fn().data), [t.data for t in tensors])
    for a, n in zip(analytic, numeric):
        assert rel_err(a, n) <= tol


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), b).data, b.data)


def test_matmul_row_by_column():
    assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    a = Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(-2, 2, (4, 2)), requires_grad=True)
    analytic = tape_grads(lambda: T.sum(T.matmul(a, b)), a)[0]
    numeric = central_difference(lambda: float((a.data @ b.data).sum()), [a.data])[0]
    assert rel_err(analytic, numeric) <= 1e-6


# ---------------------------------------------------------------- elementwise


def test_tanh_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Tape() as tape:
        y = T.tanh(x)
    assert y.data == 0.0
    assert tape.backward(y)[x] == 1.0


def test_relu_negative():
    x = Tensor(-3.0, requires_grad=True)
    with Tape() as tape:
        y = T.relu(x)
    assert y.data == 0.0
    assert tape.backward(y)[x] == 0.0


def test_sigmoid_half():
    assert T.sigmoid(Tensor(0.0)).data == 0.5


def test_sigmoid_extreme_inputs_finite():
    y = T.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(y)) and y[0] == 0.0 and y[1] == 1.0


def test_log_domain_error():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))


def test_elementwise_dispatch():
    x = Tensor([1.0, -2.0])
    np.testing.assert_array_equal(T.elementwise("relu", x).data, [1.0, 0.0])
    np.testing.assert_array_equal(T.elementwise("scale", x, 3).data, [3.0, -6.0])
    with pytest.raises(ContractError):
        T.elementwise("cube", x)


UNARY = ["tanh", "relu", "sigmoid", "neg", "exp", "abs"]


@pytest.mark.parametrize("op", UNARY)
def test_unary_gradients(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    for _ in range(20):
        x = Tensor(rng.uniform(-2, 2, 6), requires_grad=True)
        w = rng.normal(size=6)
        check_fd(lambda: T.sum(T.mul(T.elementwise(op, x), Tensor(w))), x)


def test_log_and_scale_gradients():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = Tensor(rng.uniform(0.5, 2, 5), requires_grad=True)
        check_fd(lambda: T.sum(T.scale(T.log(x), -1.7)), x)


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_binary_gradients_with_broadcast(op):
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, (4,)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 4)))
        check_fd(lambda: T.sum(T.mul(T.elementwise(op, a, b), w)), a, b)


def test_shape_ops_gradients():
    rng = np.random.default_rng(3)
    a = Tensor(rng.uniform(-2, 2, (2, 3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(-2, 2, (2, 3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 6)))

    def f():
        s = T.stack([a, b], axis=1)                 # [2, 2, 3, 4]
        c = T.concat([T.reshape(s, (4, 3, 4)), T.reshape(T.transpose(b, (0, 2, 1)), (2, 3, 4))], axis=0)
        picked = c[np.array([0, 1, 1, 5]), np.array([0, 2, 2, 1])]
        return T.sum(T.matmul(picked, w)) + T.mean(T.pad2d(a, 1)) + T.sum(T.upsample2d(b))
    check_fd(f, a, b)


def test_dropout_identity_without_rate():
    x = Tensor(np.ones(5))
    assert T.dropout(x, 0.0, np.random.default_rng(0)) is x


# ---------------------------------------------------------------- softmax


def test_softmax_uniform():
    y = T.softmax(Tensor(np.full(10, 3.7))).data
    np.testing.assert_allclose(y, 0.1, rtol=0, atol=1e-15)


def test_softmax_no_overflow():
    y = T.softmax(Tensor([1000.0, 0.0])).data
    assert abs(y[0] - 1) <= 1e-12 and abs(y[1]) <= 1e-12


def test_softmax_matches_extended_precision():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(-5, 5, 5)
        assert rel_err(T.softmax(Tensor(x)).data, softmax_mp(x)) <= 1e-12
        np.testing.assert_allclose(T.softmax(Tensor(x)).data, softmax_mp(x), rtol=1e-12)


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        T.softmax(Tensor([0.0, np.nan]))


def test_softmax_gradient():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = Tensor(rng.uniform(-2, 2, 7), requires_grad=True)
        w = Tensor(rng.normal(size=7))
        check_fd(lambda: T.sum(T.mul(T.softmax(x), w)), x)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.randoms(use_true_random=False))
def test_softmax_sums_to_one_and_is_permutation_equivariant(x, rnd):
    y = T.softmax(Tensor(x)).data
    assert abs(y.sum() - 1) <= 1e-12
    perm = np.array(rnd.sample(range(len(x)), len(x)))
    np.testing.assert_allclose(T.softmax(Tensor(x[perm])).data, y[perm], rtol=1e-12, atol=1e-300)


# ---------------------------------------------------------------- convolution


def test_conv_all_ones_kernel_sums_input():
    x = np.arange(9.0).reshape(1, 3, 3)
    y = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))))
    assert y.shape == (1, 1, 1) and y.data.item() == x.sum()


def test_conv_delta_kernel_crops_input():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 5, 6))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(T.conv2d(Tensor(x), Tensor(k)).data, x[:, 1:-1, 1:-1])


def test_conv_output_size_with_stride():
    y = T.conv2d(Tensor(np.ones((2, 84, 84))), Tensor(np.ones((4, 2, 8, 8))), stride=4)
    assert y.shape == (4, 20, 20)


def test_conv_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        T.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 4, 4))))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_gradient(stride):
    rng = np.random.default_rng(7 + stride)
    for _ in range(20):
        x = Tensor(rng.uniform(-2, 2, (1, 6, 6)), requires_grad=True)
        k = Tensor(rng.uniform(-2, 2, (2, 1, 3, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=T.conv2d(x, k, stride).shape))
        check_fd(lambda: T.sum(T.mul(T.conv2d(x, k, stride), w)), x, k, tol=1e-5)


def test_conv1d_batched_gradient():
    rng = np.random.default_rng(9)
    x = Tensor(rng.uniform(-2, 2, (3, 2, 12)), requires_grad=True)
    k = Tensor(rng.uniform(-2, 2, (4, 2, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 4, 5)))
    check_fd(lambda: T.sum(T.mul(T.conv1d(x, k, 2), w)), x, k)


# ---------------------------------------------------------------- backward


def test_backward_identity():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        pass
    assert tape.backward(x)[x] == 1.0


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.mul(x, x))
    np.testing.assert_array_equal(tape.backward(loss)[x], [2.0, 4.0])


def test_backward_multiple_use_accumulates():
    x = Tensor([1.5, -0.5], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.add(T.mul(x, x), T.scale(x, 3.0)))
    np.testing.assert_allclose(tape.backward(loss)[x], 2 * x.data + 3)


def test_backward_non_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = T.scale(x, 2.0)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_every_leaf_gradient_has_leaf_shape():
    rng = np.random.default_rng(10)
    a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = Tensor(rng.normal(size=(2,)), requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.tanh(T.add(a, b)))
    g = tape.backward(loss)
    assert g[a].shape == a.shape and g[b].shape == b.shape


def test_backward_is_deterministic():
    rng = np.random.default_rng(11)
    a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)

    def run():
        with Tape() as tape:
            loss = T.sum(T.softmax(T.matmul(T.tanh(a), a)))
        return tape.backward(loss)[a]
    assert run().tobytes() == run().tobytes()


def test_no_recording_outside_tape():
    x = Tensor([1.0], requires_grad=True)
    y = T.tanh(x)
    assert not y.requires_grad


def test_tensor_shape_invariant():
    t = Tensor(np.zeros((2, 3)))
    assert np.prod(t.shape) == t.data.size
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))


def test_gradient_check_helper():
    rng = np.random.default_rng(12)
    x = Tensor(rng.uniform(-2, 2, (3, 3)), requires_grad=True)
    assert T.gradient_check(lambda: T.sum(T.sigmoid(T.matmul(x, x))), [x]) <= 1e-6
