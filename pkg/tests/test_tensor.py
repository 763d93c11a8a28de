import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from t2vstock import tensor as T
from t2vstock.tensor import (
    AxisOutOfRange, DisconnectedParameterWarning, NotScalar, ShapeMismatch, Tensor,
    finite_difference_check, no_grad,
)


def param(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def loop_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def test_add_example():
    a = Tensor([1.0, 2.0], requires_grad=True)
    out = T.add(a, Tensor([3.0, 4.0]))
    np.testing.assert_array_equal(out.data, [4, 6])
    T.sum(out).backward()
    np.testing.assert_array_equal(a.grad, [1, 1])


def test_square_sum_gradient():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    T.sum(T.square(x)).backward()
    np.testing.assert_array_equal(x.grad, [2, -4, 6])


def test_matmul_gradient_example():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(np.ones((3, 2)), requires_grad=True)
    T.sum(T.matmul(a, b)).backward()
    np.testing.assert_array_equal(a.grad, np.ones((2, 2)) @ np.ones((2, 3)))
    np.testing.assert_array_equal(b.grad, a.data.T @ np.ones((2, 2)))


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 3))
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, loop_matmul(a, b), atol=1e-12)


def test_batched_matmul_matches_loop(rng):
    a, b = rng.normal(size=(3, 4, 6)), rng.normal(size=(6, 2))
    out = T.matmul(Tensor(a), Tensor(b)).data
    for i in range(3):
        np.testing.assert_allclose(out[i], loop_matmul(a[i], b), atol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_axis_out_of_range():
    with pytest.raises(AxisOutOfRange):
        T.sum(Tensor(np.ones((2, 3))), axis=2)
    with pytest.raises(AxisOutOfRange):
        T.mean(Tensor(np.ones((2, 3))), axis=-3)


def test_backward_needs_scalar():
    with pytest.raises(NotScalar):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_disconnected_parameter_warns():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    with pytest.warns(DisconnectedParameterWarning):
        T.sum(a).backward(params=[a, b])
    np.testing.assert_array_equal(b.grad, [0.0])


def test_no_grad_records_nothing():
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = T.mul(a, 2.0)
    assert not out.requires_grad and out._parents == ()
    assert T.grad_enabled()


def test_backward_resets_stale_grads():
    a = Tensor([2.0], requires_grad=True)
    T.sum(T.square(a)).backward()
    T.sum(T.square(a)).backward()
    np.testing.assert_array_equal(a.grad, [4.0])


def test_shared_subexpression_accumulates():
    a = Tensor([3.0], requires_grad=True)
    b = T.mul(a, a)
    T.sum(T.add(b, b)).backward()
    np.testing.assert_array_equal(a.grad, [12.0])


def test_deep_chain_has_no_recursion_limit():
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(5000):
        y = T.add(y, 0.0)
    T.sum(y).backward()
    np.testing.assert_array_equal(x.grad, [1.0])


def test_softmax_properties(rng):
    x = rng.normal(scale=5, size=(4, 7))
    y = T.softmax_lastdim(Tensor(x)).data
    np.testing.assert_allclose(y.sum(-1), 1, atol=1e-12)
    assert (y >= 0).all()
    np.testing.assert_allclose(T.softmax_lastdim(Tensor(x + 100.0)).data, y, atol=1e-12)
    big = T.softmax_lastdim(Tensor([[1000.0, 0.0]])).data
    assert np.isfinite(big).all() and big[0, 0] == pytest.approx(1.0)


def test_layer_norm_scalar_oracle():
    x = [1.0, 2.0, 3.0, 6.0]
    mu = sum(x) / 4
    var = sum((v - mu) ** 2 for v in x) / 4
    expected = [(v - mu) / (var + 1e-5) ** 0.5 * 2.0 + 0.5 for v in x]
    out = T.layer_norm_lastdim(Tensor([x]), Tensor(np.full(4, 2.0)), Tensor(np.full(4, 0.5)))
    np.testing.assert_allclose(out.data[0], expected, atol=1e-12)


def test_relu_and_abs():
    x = Tensor([-1.0, 0.5], requires_grad=True)
    T.sum(T.add(T.relu(x), T.absolute(x))).backward()
    np.testing.assert_array_equal(x.grad, [-1.0, 2.0])


def test_dropout_identity_at_inference(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    assert T.dropout(x, 0.5, rng, training=False) is x
    assert T.dropout(x, 0.0, rng, training=True) is x


def test_dropout_inverted_scaling():
    rng = np.random.default_rng(0)
    out = T.dropout(Tensor(np.ones(100_000)), 0.25, rng, training=True).data
    assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
    assert out.mean() == pytest.approx(1.0, abs=0.01)


# finite differences per op

def _fd(f, params):
    return finite_difference_check(f, params, h=1e-6)


OPS = {
    "add": lambda a, b: T.sum(T.mul(T.add(a, b), T.add(a, b))),
    "sub": lambda a, b: T.sum(T.square(T.sub(a, b))),
    "mul": lambda a, b: T.sum(T.mul(a, b)),
    "sin": lambda a, b: T.sum(T.mul(T.sin(a), b)),
    "matmul": lambda a, b: T.sum(T.square(T.matmul(a, T.swap_last(b)))),
    "reshape": lambda a, b: T.sum(T.mul(T.reshape(a, (12,)), T.reshape(b, (12,)))),
    "transpose": lambda a, b: T.sum(T.mul(T.transpose(T.reshape(a, (2, 3, 2)), (2, 0, 1)),
                                          T.transpose(T.reshape(b, (2, 3, 2)), (2, 0, 1)))),
    "concat": lambda a, b: T.sum(T.square(T.concat_lastdim(a, b))),
    "mean_axis": lambda a, b: T.sum(T.square(T.mean(T.mul(a, b), axis=0))),
    "sum_axis": lambda a, b: T.sum(T.square(T.sum(T.mul(a, b), axis=-1))),
    "softmax": lambda a, b: T.sum(T.mul(T.softmax_lastdim(a), b)),
    "broadcast": lambda a, b: T.sum(T.mul(T.broadcast_to(T.sum(a, axis=0), (3, 4)), b)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sorted(OPS).index(name))
    a, b = param(rng, 3, 4), param(rng, 3, 4)
    assert _fd(lambda: OPS[name](a, b), [a, b]) < 1e-6


def test_layer_norm_gradient():
    rng = np.random.default_rng(5)
    x, g, b = param(rng, 3, 6), param(rng, 6), param(rng, 6)
    w = Tensor(rng.normal(size=(3, 6)))
    assert _fd(lambda: T.sum(T.mul(T.layer_norm_lastdim(x, g, b), w)), [x, g, b]) < 1e-6


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(6)
    x = Tensor(rng.choice([-1, 1], size=(3, 4)) * rng.uniform(0.1, 1.0, (3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 4)))
    assert _fd(lambda: T.sum(T.mul(T.relu(x), w)), [x]) < 1e-6


def test_bias_broadcast_gradient():
    rng = np.random.default_rng(7)
    x, bias = param(rng, 2, 5, 3), param(rng, 3)
    assert _fd(lambda: T.sum(T.square(T.add(x, bias))), [x, bias]) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**16))
def test_matmul_associative(n, k, m, p, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (Tensor(rng.normal(size=s)) for s in ((n, k), (k, m), (m, p)))
    left = T.matmul(T.matmul(a, b), c).data
    right = T.matmul(a, T.matmul(b, c)).data
    np.testing.assert_allclose(left, right, rtol=1e-10, atol=1e-10)


def test_backward_deterministic(rng):
    a, b = param(rng, 4, 4), param(rng, 4, 4)
    grads = []
    for _ in range(2):
        T.sum(T.softmax_lastdim(T.matmul(a, b))).backward()
        grads.append((a.grad.copy(), b.grad.copy()))
    np.testing.assert_array_equal(grads[0][0], grads[1][0])
    np.testing.assert_array_equal(grads[0][1], grads[1][1])


def test_fd_check_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference_check(lambda: Tensor(0.0), [], h=0)


def test_fd_check_detects_wrong_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)

    def wrong():
        out = T.square(x)
        saved = out._backward
        out._backward = lambda g: saved(3 * g)
        return T.sum(out)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert finite_difference_check(wrong, [x]) > 0.5
