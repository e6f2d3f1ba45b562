"""Tape primitive correctness: every vjp against central differences."""

import numpy as np
import pytest

from cordes_pinn.autodiff import tape as T
from cordes_pinn.exceptions import InvalidHandleError


def numeric_grad(build, theta, h=1e-6):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (build(up) - build(dn)) / (2.0 * h)
    return g


def check_against_fd(build_loss, theta, rtol=1e-6, atol=1e-9):
    tape = T.Tape()
    leaf = tape.param(theta.copy(), slice(0, theta.size))
    loss = build_loss(leaf)
    grad = tape.backward(loss)
    fd = numeric_grad(lambda th: float(build_loss_value(build_loss, th)), theta)
    np.testing.assert_allclose(grad, fd, rtol=rtol, atol=atol)


def build_loss_value(build_loss, theta):
    tape = T.Tape()
    leaf = tape.param(theta.copy(), slice(0, theta.size))
    return build_loss(leaf).value


@pytest.fixture
def theta():
    return np.random.default_rng(7).standard_normal(6)


@pytest.mark.parametrize(
    "name,builder",
    [
        ("square", lambda x: T.mean_all(T.square(x))),
        ("tanh", lambda x: T.mean_all(T.square(T.tanh(x)))),
        ("relu", lambda x: T.mean_all(T.square(T.relu(x)))),
        ("scale", lambda x: T.sum_all(T.scale(x, -2.5))),
        ("neg", lambda x: T.sum_all(T.square(T.neg(x)))),
        ("add_const", lambda x: T.mean_all(T.square(T.add_const(x, 1.5)))),
        ("mul_const", lambda x: T.mean_all(T.square(T.mul_const(x, np.arange(6.0))))),
        ("rsub_const", lambda x: T.mean_all(T.square(T.rsub_const(2.0, x)))),
        ("mul_self", lambda x: T.sum_all(T.mul(x, x))),
        ("add", lambda x: T.sum_all(T.square(T.add(x, T.tanh(x))))),
        ("sub", lambda x: T.sum_all(T.square(T.sub(x, T.tanh(x))))),
    ],
)
def test_elementwise_vjps(name, builder, theta):
    check_against_fd(builder, theta)


def test_operator_sugar(theta):
    def builder(x):
        return T.mean_all(T.square(2.0 * x + 1.0 - (-x) * 0.5))

    check_against_fd(builder, theta)


def test_dot_last_and_bias():
    rng = np.random.default_rng(3)
    theta = rng.standard_normal(12)
    x_const = rng.standard_normal((5, 3))

    def builder(leaf):
        w = T.reshape(leaf, (3, 4))  # leaf reshaped into the weight matrix
        return T.mean_all(T.square(T.dot_last(x_const, w)))

    check_against_fd(builder, theta)


def test_wsum_vjp():
    rng = np.random.default_rng(5)
    theta = rng.standard_normal(8)
    weights = rng.standard_normal((2, 4))

    def builder(leaf):
        return T.sum_all(T.square(T.wsum(T.reshape(leaf, (2, 4)), weights)))

    check_against_fd(builder, theta)


def test_pair_product_vjp():
    rng = np.random.default_rng(6)
    theta = rng.standard_normal(2 * 2 * 3)
    iu0, iu1 = np.triu_indices(2)

    def builder(leaf):
        g = T.reshape(leaf, (2, 2, 3))
        return T.sum_all(T.square(T.pair_product(g, iu0, iu1)))

    check_against_fd(builder, theta)


def test_zero_loss_gives_zero_gradient(theta):
    tape = T.Tape()
    leaf = tape.param(theta, slice(0, theta.size))
    loss = T.mul_const(T.mean_all(T.square(leaf)), 0.0)
    grad = tape.backward(loss)
    assert np.array_equal(grad, np.zeros_like(theta))


def test_half_norm_squared_gradient_is_theta(theta):
    tape = T.Tape()
    leaf = tape.param(theta, slice(0, theta.size))
    loss = T.scale(T.sum_all(T.square(leaf)), 0.5)
    grad = tape.backward(loss)
    np.testing.assert_allclose(grad, theta, rtol=0, atol=0)


def test_backward_is_rerunnable(theta):
    tape = T.Tape()
    leaf = tape.param(theta, slice(0, theta.size))
    loss = T.mean_all(T.square(T.tanh(leaf)))
    g1 = tape.backward(loss)
    g2 = tape.backward(loss)
    assert np.array_equal(g1, g2)
    assert len(tape) == 4  # backward must not append nodes


def test_foreign_handle_rejected(theta):
    tape1 = T.Tape()
    tape2 = T.Tape()
    leaf = tape1.param(theta, slice(0, theta.size))
    loss = T.mean_all(T.square(leaf))
    with pytest.raises(InvalidHandleError):
        tape2.backward(loss)


def test_nonscalar_loss_rejected(theta):
    tape = T.Tape()
    leaf = tape.param(theta, slice(0, theta.size))
    with pytest.raises(InvalidHandleError):
        tape.backward(T.square(leaf))


def test_buffer_pool_reuses_buffers():
    pool = T.BufferPool()
    a = pool.take((4, 5), np.float64)
    b = pool.take((4, 5), np.float64)
    assert a is not b
    pool.reset()
    assert pool.take((4, 5), np.float64) is a
    assert pool.take((4, 5), np.float64) is b
