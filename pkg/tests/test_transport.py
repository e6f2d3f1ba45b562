"""Transport fields, linearization fixed points, map extraction, pushforward."""

import numpy as np
import pytest

from cordes_pinn.exceptions import MassBalanceError, NonConvexityError
from cordes_pinn.nonlinear import ClosedFormState, surrogate_residual
from cordes_pinn.problems import Rectangle, sample_interior
from cordes_pinn.problems.registry import ExactSolution
from cordes_pinn.transport import (
    TransportProblem,
    example51_fields,
    ot_linearize,
    pushforward_check,
    q_profile,
    q_profile_d1,
    q_profile_d2,
    transport_map,
)


@pytest.fixture(scope="module")
def prob():
    return example51_fields()


def quadratic_state(dim=2):
    return ClosedFormState(
        ExactSolution(
            value=lambda p: 0.5 * np.sum(p**2, axis=1),
            grad=lambda p: p.copy(),
            hess=lambda p: np.broadcast_to(np.eye(dim), (p.shape[0], dim, dim)).copy(),
        )
    )


def uniform_problem(prob):
    ones = lambda p: np.ones(p.shape[0])
    return TransportProblem(
        name="uniform",
        mu_field=ones,
        nu_field=ones,
        nu_grad_field=lambda p: np.zeros_like(p),
        source_domain=prob.source_domain,
        target_domain=prob.target_domain,
    )


def test_q_value_at_zero():
    expected = 1.0 / (256.0 * np.pi**3) + 1.0 / (32.0 * np.pi)
    assert q_profile(0.0) == pytest.approx(expected, abs=1e-18)


def test_q_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    z = rng.uniform(-0.5, 0.5, 100)
    h = 1e-6
    d1_fd = (q_profile(z + h) - q_profile(z - h)) / (2 * h)
    d2_fd = (q_profile_d1(z + h) - q_profile_d1(z - h)) / (2 * h)
    np.testing.assert_allclose(
        q_profile_d1(z), d1_fd, rtol=1e-8, atol=1e-8 * np.max(np.abs(d1_fd))
    )
    np.testing.assert_allclose(
        q_profile_d2(z), d2_fd, rtol=1e-8, atol=1e-8 * np.max(np.abs(d2_fd))
    )


def test_density_integrates_to_one(prob):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.5, 0.5, size=(1_000_000, 2))
    assert np.mean(prob.mu_field(pts)) == pytest.approx(1.0, abs=5e-3)


def test_density_peak_near_center(prob):
    # global max sits in the central region; the boundary frame stays flat
    ax = np.linspace(-0.5, 0.5, 401)
    mesh = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    mu = prob.mu_field(pts)
    peak = pts[np.argmax(mu)]
    assert np.max(np.abs(peak)) <= 0.2
    frame = pts[np.max(np.abs(pts), axis=1) >= 0.4]
    assert np.max(mu) > np.max(prob.mu_field(frame))
    assert np.max(np.abs(prob.mu_field(frame) - 1.0)) < 0.2


def test_density_positive(prob):
    pts = np.random.default_rng(2).uniform(-0.5, 0.5, size=(200_000, 2))
    assert prob.mu_field(pts).min() > 0.0


def test_analytic_potential_solves_ma(prob):
    pts = np.random.default_rng(3).uniform(-0.5, 0.5, size=(5_000, 2))
    hессians = prob.analytic_potential.hess(pts)
    det = np.linalg.det(hессians)
    np.testing.assert_allclose(det, prob.mu_field(pts), atol=1e-12)


def test_mass_balance(prob):
    mass_mu, mass_nu = prob.mass_balance()
    assert mass_mu == pytest.approx(1.0, abs=0.01)
    assert mass_nu == pytest.approx(1.0, abs=1e-12)


def test_ot_linearize_uniform_fixed_point(prob):
    uni = uniform_problem(prob)
    state = quadratic_state()
    pts = sample_interior(uni.source_domain, 100, 0)
    surrogate = ot_linearize(state, uni, pts)
    np.testing.assert_allclose(surrogate.a_field(pts), np.broadcast_to(np.eye(2), (100, 2, 2)))
    np.testing.assert_allclose(surrogate.b_field(pts), np.zeros((100, 2)))
    assert surrogate_residual(state, surrogate, pts) < 1e-14


def test_ot_linearize_uniform_target_drops_convection(prob):
    state = ClosedFormState(prob.analytic_potential)
    pts = sample_interior(prob.source_domain, 100, 1)
    surrogate = ot_linearize(state, prob, pts)
    np.testing.assert_allclose(surrogate.b_field(pts), 0.0)


def test_ot_linearize_analytic_fixed_point(prob):
    state = ClosedFormState(prob.analytic_potential)
    pts = sample_interior(prob.source_domain, 200, 2)
    surrogate = ot_linearize(state, prob, pts)
    assert surrogate_residual(state, surrogate, pts) < 1e-5
    assert surrogate.provenance["min_cordes_ratio"] > 1.0
    assert surrogate.provenance["min_multiplier"] > 0.0


def test_ot_linearize_rejects_concave_states(prob):
    concave = ClosedFormState(
        ExactSolution(
            value=lambda p: -0.5 * np.sum(p**2, axis=1),
            grad=lambda p: -p,
            hess=lambda p: np.broadcast_to(-np.eye(2), (p.shape[0], 2, 2)).copy(),
        )
    )
    pts = sample_interior(prob.source_domain, 50, 0)
    with pytest.raises(NonConvexityError):
        ot_linearize(concave, prob, pts)


def test_transport_map_identity_and_translation():
    state = quadratic_state()
    assert np.allclose(transport_map(state, np.array([0.3, -0.2])), [0.3, -0.2])
    shift = ClosedFormState(
        ExactSolution(
            value=lambda p: 0.5 * np.sum(p**2, axis=1) + p @ np.array([0.1, -0.3]),
            grad=lambda p: p + np.array([0.1, -0.3]),
            hess=lambda p: np.broadcast_to(np.eye(2), (p.shape[0], 2, 2)).copy(),
        )
    )
    np.testing.assert_allclose(
        transport_map(shift, np.array([0.0, 0.0])), [0.1, -0.3], atol=1e-15
    )


def test_transport_map_shift_invariance(prob):
    # adding a constant to the potential leaves the map bitwise unchanged
    base = prob.analytic_potential
    shifted = ExactSolution(
        value=lambda p: base.value(p) + 42.0, grad=base.grad, hess=base.hess
    )
    pts = np.random.default_rng(5).uniform(-0.4, 0.4, size=(20, 2))
    t1 = transport_map(ClosedFormState(base), pts)
    t2 = transport_map(ClosedFormState(shifted), pts)
    assert np.array_equal(t1, t2)


def test_analytic_map_spot_value(prob):
    # map at the origin from the closed forms: T(0) = 4 (q'(0) q(0), q(0) q'(0)) = 0
    t0 = prob.analytic_map(np.zeros((1, 2)))[0]
    np.testing.assert_allclose(t0, [0.0, 0.0], atol=1e-18)
    x = np.array([[0.2, -0.3]])
    expect = np.array([
        0.2 + 4.0 * q_profile_d1(0.2) * q_profile(-0.3),
        -0.3 + 4.0 * q_profile(0.2) * q_profile_d1(-0.3),
    ])
    np.testing.assert_allclose(prob.analytic_map(x)[0], expect, rtol=1e-15)


def test_analytic_map_preserves_boundary(prob):
    # q'(+-1/2) = 0 makes the analytic map send the square onto itself
    edge = np.array([[0.5, 0.1], [-0.5, -0.3], [0.2, 0.5], [-0.1, -0.5]])
    mapped = prob.analytic_map(edge)
    assert np.all(np.abs(mapped) <= 0.5 + 1e-12)


def test_pushforward_identity_map(prob):
    uni = uniform_problem(prob)
    report = pushforward_check(quadratic_state(), uni, n_mc=100_000, seed=1)
    assert report["tv_distance"] <= 0.02
    assert not report["boundary_failure"]


def test_pushforward_analytic_map(prob):
    state = ClosedFormState(prob.analytic_potential)
    report = pushforward_check(state, prob, n_mc=100_000, seed=2)
    assert report["tv_distance"] <= 0.05
    assert not report["boundary_failure"]


def test_pushforward_constant_map_flagged(prob):
    uni = uniform_problem(prob)
    constant = ClosedFormState(
        ExactSolution(
            value=lambda p: np.zeros(p.shape[0]),
            grad=lambda p: np.zeros_like(p),
            hess=lambda p: np.zeros((p.shape[0], 2, 2)),
        )
    )
    report = pushforward_check(constant, uni, n_mc=20_000, seed=3)
    assert report["tv_distance"] > 0.9


def test_mass_balance_error_raised():
    from cordes_pinn.autodiff import NetworkArch
    from cordes_pinn.nonlinear import OuterConfig
    from cordes_pinn.training import LossConfig
    from cordes_pinn.transport import solve_transport

    square = Rectangle((-0.5, -0.5), (0.5, 0.5))
    bad = TransportProblem(
        name="unbalanced",
        mu_field=lambda p: np.full(p.shape[0], 2.0),
        nu_field=lambda p: np.ones(p.shape[0]),
        nu_grad_field=lambda p: np.zeros_like(p),
        source_domain=square,
        target_domain=square,
    )
    with pytest.raises(MassBalanceError):
        solve_transport(bad, NetworkArch(2, (8,)), OuterConfig(100, 1, 100),
                        LossConfig(n_interior=100, n_boundary=40), seed=0)
