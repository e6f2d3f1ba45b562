"""Network jets: initialization, exact derivatives, symmetry, determinism."""

import numpy as np
import pytest

from cordes_pinn.autodiff import (
    NetworkArch,
    Tape,
    eval_values,
    finite_diff_jet,
    forward_jets,
    init_network,
    jet2_eval,
    loss_backward,
    packed_index,
    param_layout,
)
from cordes_pinn.autodiff import tape as T
from cordes_pinn.exceptions import InvalidArchitectureError, PropagationError


def test_init_deterministic():
    arch = NetworkArch(2, (50, 50))
    assert np.array_equal(init_network(arch, 0), init_network(arch, 0))
    assert not np.array_equal(init_network(arch, 0), init_network(arch, 1))


def test_init_biases_zero():
    arch = NetworkArch(2, (1, 1))
    theta = init_network(arch, 123)
    layout = param_layout(arch)
    for layer in range(len(layout.slices)):
        assert np.all(layout.biases(theta, layer) == 0.0)


def test_init_xavier_bound_per_layer():
    arch = NetworkArch(2, (50, 50, 50, 50))
    theta = init_network(arch, 7)
    layout = param_layout(arch)
    dims = arch.layer_dims
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.max(np.abs(layout.weights(theta, layer))) <= bound
    # the 50 -> 50 layers carry the sqrt(6/100) bound
    assert np.max(np.abs(layout.weights(theta, 1))) <= np.sqrt(6.0 / 100.0)


def test_invalid_architectures():
    with pytest.raises(InvalidArchitectureError):
        NetworkArch(2, ())
    with pytest.raises(InvalidArchitectureError):
        NetworkArch(2, (16, 0))
    with pytest.raises(InvalidArchitectureError):
        NetworkArch(0, (4,))
    with pytest.raises(InvalidArchitectureError):
        NetworkArch(2, (4,), activation="relu")


def test_single_affine_like_jet():
    # one-hidden-unit linear regime: tanh(z) ~ z for tiny z scales the map,
    # so check the exact affine case through a tiny perturbation instead:
    # u(x) = w2 * tanh(w1 . x + b1) + b2 with w1=(3,4)*s, evaluated where
    # tanh is effectively linear. The analytic jet of the full composition is
    # checked against finite differences elsewhere; here pin the hand case.
    arch = NetworkArch(2, (1,))
    layout = param_layout(arch)
    theta = np.zeros(layout.n_params)
    s = 1e-6  # keeps |z| < 1e-5 so tanh(z) = z to 1e-16 relative
    theta[layout.slices[0][0]] = np.array([3.0, 4.0]) * s
    theta[layout.slices[1][0]] = 1.0 / s
    theta[layout.slices[1][1]] = 5.0
    tape = Tape()
    jet = jet2_eval(arch, theta, np.array([1.0, 2.0]), tape)
    assert abs(jet.value - 16.0) < 1e-9
    np.testing.assert_allclose(jet.grad, [3.0, 4.0], rtol=1e-9)
    np.testing.assert_allclose(jet.hess, np.zeros((2, 2)), atol=1e-4)


@pytest.mark.parametrize("d,widths", [(1, (8,)), (2, (16, 12)), (3, (10, 10)), (5, (14,))])
def test_jets_match_finite_differences(d, widths):
    rng = np.random.default_rng(d)
    arch = NetworkArch(d, widths)
    theta = init_network(arch, d) + 0.1 * rng.standard_normal(param_layout(arch).n_params)
    points = rng.uniform(-1.0, 1.0, size=(4, d))
    jet = forward_jets(Tape(), arch, theta, points, order=2)
    pidx = packed_index(d)
    for k in range(points.shape[0]):
        g_fd, h_fd = finite_diff_jet(
            lambda x: eval_values(arch, theta, x[None])[0], points[k], 1e-4
        )
        np.testing.assert_allclose(jet.grad.value[k], g_fd, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(
            pidx.unpack(jet.hess.value[k]), h_fd, rtol=1e-5, atol=1e-6
        )


def test_hessian_symmetry_bitwise():
    arch = NetworkArch(3, (12, 8))
    theta = init_network(arch, 9)
    jet = jet2_eval(arch, theta, np.array([0.3, -0.7, 0.1]), Tape())
    # packed storage: both triangles are the same float, not approximately
    assert np.array_equal(jet.hess, jet.hess.T)


def test_jet2_eval_deterministic():
    arch = NetworkArch(2, (16,))
    theta = init_network(arch, 4)
    x = np.array([0.2, -0.4])
    j1 = jet2_eval(arch, theta, x, Tape())
    j2 = jet2_eval(arch, theta, x, Tape())
    assert j1.value == j2.value
    assert np.array_equal(j1.grad, j2.grad)
    assert np.array_equal(j1.hess, j2.hess)


def test_nonfinite_input_rejected():
    arch = NetworkArch(2, (4,))
    theta = init_network(arch, 0)
    with pytest.raises(PropagationError) as err:
        jet2_eval(arch, theta, np.array([0.0, np.nan]), Tape())
    assert "index 1" in str(err.value)


def test_loss_backward_matches_fd_through_jets():
    rng = np.random.default_rng(11)
    arch = NetworkArch(2, (16,))
    theta = init_network(arch, 2) + 0.1 * rng.standard_normal(param_layout(arch).n_params)
    points = rng.uniform(-1.0, 1.0, size=(5, 2))
    coeff = rng.standard_normal((1 + 2 + 3, 5))

    def loss_value(th):
        tape = Tape()
        jet = forward_jets(tape, arch, th, points, order=2)
        return tape, T.mean_all(T.square(T.jet_contract(jet.combined, coeff)))

    tape, loss = loss_value(theta)
    grad = loss_backward(tape, loss)
    fd = np.zeros_like(grad)
    h = 1e-5
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd[i] = (loss_value(up)[1].value - loss_value(dn)[1].value) / (2.0 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def test_finite_diff_jet_polynomial():
    grad, hess = finite_diff_jet(lambda x: x[0] ** 2 * x[1], np.array([1.0, 2.0]), 1e-4)
    np.testing.assert_allclose(grad, [4.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(hess, [[4.0, 2.0], [2.0, 0.0]], atol=1e-5)


def test_finite_diff_jet_constant_field():
    grad, hess = finite_diff_jet(lambda x: 3.5, np.array([0.3, -0.2]), 1e-4)
    assert np.max(np.abs(grad)) < 1e-8
    assert np.max(np.abs(hess)) < 1e-8


def test_finite_diff_jet_trig():
    x = np.array([np.pi / 2, np.pi / 2])
    grad, hess = finite_diff_jet(lambda p: np.sin(p[0]) * np.sin(p[1]), x, 1e-4)
    np.testing.assert_allclose(hess, np.diag([-1.0, -1.0]), atol=1e-5)
    np.testing.assert_allclose(grad, [0.0, 0.0], atol=1e-8)


def test_closed_form_field_jet():
    # frozen closed-form field u = x1^2 x2 evaluated through the jet oracle
    grad, hess = finite_diff_jet(lambda x: x[0] ** 2 * x[1], np.array([1.0, 2.0]), 1e-5)
    np.testing.assert_allclose(grad, [4.0, 1.0], rtol=1e-7, atol=1e-7)
