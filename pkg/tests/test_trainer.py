"""Loss assembly, Adam, training loop contracts, metrics, landscape probe."""

import numpy as np
import pytest

from cordes_pinn.autodiff import NetworkArch, Tape, init_network, loss_backward, param_layout
from cordes_pinn.exceptions import TrainingDivergenceError
from cordes_pinn.problems import Rectangle, get_problem, sample_boundary, sample_interior
from cordes_pinn.problems.registry import ProblemSpec
from cordes_pinn.training import (
    LossConfig,
    adam_init,
    adam_step,
    boundary_loss,
    composite_loss,
    cordes_loss,
    errors_l2_linf,
    landscape_probe,
    linear_residual,
    sigma_proxy,
    train,
)


@pytest.fixture(scope="module")
def small_arch():
    return NetworkArch(2, (16,))


def zero_params(arch):
    return np.zeros(param_layout(arch).n_params)


def identity_laplace_spec(f_value=0.0):
    return ProblemSpec(
        name="laplace",
        domain=Rectangle((-1.0, -1.0), (1.0, 1.0)),
        a_field=lambda p: np.broadcast_to(np.eye(2), (p.shape[0], 2, 2)).copy(),
        b_field=None,
        c_field=None,
        f_field=lambda p: np.full(p.shape[0], f_value),
        g_field=lambda p: np.zeros(p.shape[0]),
    )


def test_zero_network_zero_source_residual(small_arch):
    spec = identity_laplace_spec(0.0)
    r = linear_residual(small_arch, zero_params(small_arch), spec, np.array([0.2, 0.3]))
    assert np.max(np.abs(r.value)) == 0.0


def test_zero_network_ex44_residual_is_minus_two(small_arch):
    spec = get_problem("ex4.4-continuous")
    pts = sample_interior(spec.domain, 20, 0)
    r = linear_residual(small_arch, zero_params(small_arch), spec, pts)
    np.testing.assert_allclose(r.value, -2.0, rtol=0, atol=0)


def test_cordes_loss_zero_at_low_residual(small_arch):
    # identity coefficients, f = 0, zero network: residual identically zero
    spec = identity_laplace_spec(0.0)
    pts = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    loss = cordes_loss(small_arch, zero_params(small_arch), spec, pts)
    assert float(loss.value) == 0.0


def test_cordes_equals_plain_for_identity_coefficients(small_arch):
    # A = I in 2D: multiplier tr/tr(A^2) = 2/2 = 1, so both modes coincide
    spec = identity_laplace_spec(1.0)
    rng = np.random.default_rng(1)
    theta = init_network(small_arch, 0) + 0.1 * rng.standard_normal(
        param_layout(small_arch).n_params
    )
    pts = rng.uniform(-1, 1, (40, 2))
    lc = cordes_loss(small_arch, theta, spec, pts, delta=0.0, mode="cordes")
    lp = cordes_loss(small_arch, theta, spec, pts, delta=0.0, mode="plain")
    assert float(lc.value) == float(lp.value)


def test_single_point_loss_is_scaled_square(small_arch):
    spec = get_problem("ex4.2-continuous")
    theta = init_network(small_arch, 3)
    x = np.array([[0.37, -0.21]])
    r = linear_residual(small_arch, theta, spec, x)
    a, _, _ = spec.coefficients(x)
    lam = np.trace(a[0]) / (np.sum(a[0] * a[0]) + 1e-8)
    loss = cordes_loss(small_arch, theta, spec, x, delta=1e-8)
    assert float(loss.value) == pytest.approx((lam * float(r.value[0])) ** 2, rel=1e-12)


def test_boundary_loss_values(small_arch):
    spec = identity_laplace_spec()
    pts = sample_boundary(spec.domain, 10, 0)
    theta = zero_params(small_arch)
    assert float(boundary_loss(small_arch, theta, spec, pts).value) == 0.0
    spec_one = ProblemSpec(
        name="one", domain=spec.domain, a_field=spec.a_field, b_field=None,
        c_field=None, f_field=spec.f_field, g_field=lambda p: np.ones(p.shape[0]),
    )
    assert float(boundary_loss(small_arch, theta, spec_one, pts).value) == 1.0


def test_composite_loss_weighted_sum():
    tape = Tape()
    li = tape.constant(np.asarray(0.5))
    lb = tape.constant(np.asarray(0.25))
    cfg = LossConfig(w_int=1.0, w_bc=100.0)
    assert float(composite_loss(cfg, li, lb).value) == pytest.approx(25.5)


def test_composite_loss_interior_only():
    tape = Tape()
    li = tape.constant(np.asarray(0.75))
    lb = tape.constant(np.asarray(123.0))
    cfg = LossConfig(w_int=1.0, w_bc=1e-12)
    assert float(composite_loss(cfg, li, lb).value) == pytest.approx(0.75, abs=1e-9)


def test_composite_gradient_matches_fd_on_registered_problem():
    arch = NetworkArch(2, (10,))
    spec = get_problem("ex4.2-discontinuous")
    rng = np.random.default_rng(2)
    theta = init_network(arch, 1) + 0.1 * rng.standard_normal(param_layout(arch).n_params)
    pts = sample_interior(spec.domain, 6, 3, spec.singular_sets)
    bc = sample_boundary(spec.domain, 4, 4)
    cfg = LossConfig(w_int=1.0, w_bc=10.0)

    def total(th):
        tape = Tape()
        li = cordes_loss(arch, th, spec, pts, tape=tape)
        lb = boundary_loss(arch, th, spec, bc, tape=tape)
        return tape, composite_loss(cfg, li, lb)

    tape, loss = total(theta)
    grad = loss_backward(tape, loss)
    fd = np.zeros_like(grad)
    h = 1e-5
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd[i] = (total(up)[1].value - total(dn)[1].value) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def test_exact_solution_substitution_all_linear_problems():
    # closed-form residual consistency: cordes loss of the exact jets < 1e-10
    for name in ("ex4.1-smooth", "ex4.2-continuous", "ex4.2-discontinuous", "ex4.3-5d"):
        spec = get_problem(name)
        pts = sample_interior(spec.domain, 100, 5, spec.singular_sets)
        a, _, _ = spec.coefficients(pts)
        lam = np.trace(a, axis1=1, axis2=2) / (np.sum(a * a, axis=(1, 2)) + 1e-8)
        residual = spec.residual_at_exact(pts)
        assert float(np.mean((lam * residual) ** 2)) < 1e-10, name


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_zero_grad_keeps_params():
    state = adam_init(4)
    params = np.array([1.0, -2.0, 3.0, 0.5])
    new_state, new_params = adam_step(state, params, np.zeros(4))
    assert new_state.t == 1
    np.testing.assert_array_equal(new_params, params)


def test_adam_first_step_is_signed_lr():
    state = adam_init(3, lr=3e-4)
    params = np.zeros(3)
    grad = np.array([0.5, -2.0, 7.0])
    _, new_params = adam_step(state, params, grad)
    np.testing.assert_allclose(new_params, -3e-4 * np.sign(grad), atol=1e-6 * 3e-4)


def test_adam_deterministic():
    state = adam_init(5)
    params = np.linspace(-1, 1, 5)
    grad = np.arange(5.0)
    out1 = adam_step(state, params, grad)
    out2 = adam_step(state, params, grad)
    assert out1[0].t == out2[0].t
    np.testing.assert_array_equal(out1[1], out2[1])
    np.testing.assert_array_equal(out1[0].m, out2[0].m)


def test_adam_rejects_nonfinite_gradient():
    state = adam_init(2)
    with pytest.raises(TrainingDivergenceError):
        adam_step(state, np.zeros(2), np.array([1.0, np.inf]))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def test_train_zero_epochs_initial_row(small_arch):
    spec = get_problem("ex4.1-smooth")
    cfg = LossConfig(n_interior=200, n_boundary=50)
    res = train(spec, small_arch, cfg, epochs=0, seed=0, grid_resolution=20)
    assert len(res.history) == 1
    assert res.history[0].epoch == 0
    assert res.history[0].sigma_proxy is None
    np.testing.assert_array_equal(res.params, init_network(small_arch, 0))


def test_train_reproducible_bitwise(small_arch):
    spec = get_problem("ex4.1-smooth")
    cfg = LossConfig(n_interior=300, n_boundary=60)
    r1 = train(spec, small_arch, cfg, epochs=50, seed=3, eval_every=10, grid_resolution=20)
    r2 = train(spec, small_arch, cfg, epochs=50, seed=3, eval_every=10, grid_resolution=20)
    assert np.array_equal(r1.params, r2.params)
    assert [row.total_loss for row in r1.history] == [row.total_loss for row in r2.history]
    assert [row.l2 for row in r1.history] == [row.l2 for row in r2.history]


def test_train_history_monotone_epochs_and_finite(small_arch):
    spec = get_problem("ex4.2-discontinuous")
    cfg = LossConfig(n_interior=300, n_boundary=60)
    res = train(spec, small_arch, cfg, epochs=40, seed=1, eval_every=20, grid_resolution=20)
    epochs = [row.epoch for row in res.history]
    assert epochs == sorted(set(epochs))
    for row in res.history:
        assert np.isfinite(row.total_loss)
        assert np.isfinite(row.grad_norm)
        assert row.l2 is not None and np.isfinite(row.l2)


def test_train_rejects_wrong_class(small_arch):
    with pytest.raises(ValueError):
        train(get_problem("ex4.6-ma"), small_arch, LossConfig(), 10, 0)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def test_errors_identical_fields():
    grid = np.random.default_rng(0).uniform(size=(50, 2))
    vals = np.sin(grid[:, 0])
    assert errors_l2_linf(vals, vals, grid) == (0.0, 0.0)


def test_errors_constant_offset():
    grid = np.zeros((25, 2))
    l2, linf = errors_l2_linf(np.full(25, 0.1), np.zeros(25), grid)
    assert l2 == pytest.approx(0.1)
    assert linf == pytest.approx(0.1)


def test_errors_hand_case():
    grid = np.zeros((3, 1))
    l2, linf = errors_l2_linf(np.array([0.0, 0.3, 0.4]), np.zeros(3), grid)
    assert l2 == pytest.approx(np.sqrt(0.25 / 3.0))
    assert linf == pytest.approx(0.4)


def test_errors_empty_grid_raises():
    with pytest.raises(ValueError):
        errors_l2_linf(np.array([]), np.array([]), np.empty((0, 2)))


def test_sigma_proxy_values():
    assert sigma_proxy(np.array([2.0, 0.0]), np.array([0.0, 0.0]),
                       np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(2.0)
    assert sigma_proxy(np.ones(3), np.ones(3), np.ones(3), np.zeros(3)) == 0.0
    assert sigma_proxy(np.ones(3), np.zeros(3), np.ones(3), np.ones(3)) is None


def test_sigma_proxy_rayleigh_bound():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = rng.standard_normal((5, 5))
        h = m @ m.T + 0.1 * np.eye(5)
        lam_max = np.linalg.eigvalsh(h)[-1]
        t0 = rng.standard_normal(5)
        t1 = rng.standard_normal(5)
        proxy = sigma_proxy(h @ t1, h @ t0, t1, t0)
        assert proxy <= lam_max + 1e-10


# ---------------------------------------------------------------------------
# landscape probe
# ---------------------------------------------------------------------------


def test_landscape_center_is_unperturbed_loss(small_arch):
    theta = init_network(small_arch, 2)

    def loss_fn(params):
        return float(np.sum(params**2))

    probe = landscape_probe(small_arch, theta, loss_fn, half_width=0.5, grid_n=3, seed=0)
    assert probe.surface.shape == (3, 3)
    assert probe.surface[1, 1] == loss_fn(theta)


def test_landscape_quadratic_minimum_at_center(small_arch):
    theta = init_network(small_arch, 5)

    def loss_fn(params):
        return float(np.sum((params - theta) ** 2))

    probe = landscape_probe(small_arch, theta, loss_fn, half_width=1.0, grid_n=5, seed=1)
    assert np.unravel_index(np.argmin(probe.surface), probe.surface.shape) == (2, 2)


def test_landscape_directions_filter_normalized(small_arch):
    theta = init_network(small_arch, 4)
    theta += 0.01  # nonzero biases so every layer slice has positive norm
    probe = landscape_probe(small_arch, theta, lambda p: 0.0, grid_n=3, seed=2)
    layout = param_layout(small_arch)
    for direction in probe.directions:
        for w_slice, b_slice, _ in layout.slices:
            sl = slice(w_slice.start, b_slice.stop)
            assert np.linalg.norm(direction[sl]) == pytest.approx(
                np.linalg.norm(theta[sl]), rel=1e-12
            )
