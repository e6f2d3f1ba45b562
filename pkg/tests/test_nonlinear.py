"""Cofactor algebra, branch selection, Newton surrogates, dual-loop smoke."""

import numpy as np
import pytest

from cordes_pinn.autodiff import NetworkArch, init_network
from cordes_pinn.cordes import cordes_ratio
from cordes_pinn.exceptions import NonConvexityError
from cordes_pinn.nonlinear import (
    ClosedFormState,
    NetworkState,
    OuterConfig,
    cofactor,
    hjb_active_branch,
    hjb_surrogate,
    ma_linearize,
    solve_nonlinear,
    surrogate_residual,
)
from cordes_pinn.problems import get_problem, sample_interior
from cordes_pinn.problems.registry import ExactSolution, HJBSpec, ProblemSpec
from cordes_pinn.training import LossConfig


def quadratic_state():
    return ClosedFormState(
        ExactSolution(
            value=lambda p: 0.5 * np.sum(p**2, axis=1),
            grad=lambda p: p.copy(),
            hess=lambda p: np.broadcast_to(np.eye(p.shape[1]), (p.shape[0],) + (p.shape[1],) * 2).copy(),
        )
    )


def test_cofactor_2x2_formula():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(cofactor(m), [[4.0, -3.0], [-2.0, 1.0]])


def test_cofactor_identity_3x3():
    np.testing.assert_array_equal(cofactor(np.eye(3)), np.eye(3))


def test_cofactor_determinant_identity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = rng.standard_normal((3, 3))
        np.testing.assert_allclose(
            m @ cofactor(m).T, np.linalg.det(m) * np.eye(3), atol=1e-12
        )


def test_cofactor_rejects_other_dims():
    with pytest.raises(ValueError):
        cofactor(np.eye(4))


def test_active_branch_ties_break_low():
    hjb = get_problem("ex4.5-hjb")
    state = ClosedFormState(hjb.exact)
    # the exact solution makes every branch residual vanish: tie -> branch 1
    assert hjb_active_branch(state, hjb, np.array([0.4, 0.9])) == 1


def test_active_branch_argmax():
    dom = get_problem("ex4.5-hjb").domain
    ident = lambda p: np.broadcast_to(np.eye(2), (p.shape[0], 2, 2)).copy()
    zeros = lambda p: np.zeros(p.shape[0])
    hjb = HJBSpec(
        name="toy",
        domain=dom,
        controls=(1, 2),
        a_fields=(ident, ident),
        b_fields=(None, None),
        c_fields=(None, None),
        f_fields=(lambda p: np.full(p.shape[0], 1.0), lambda p: np.full(p.shape[0], -1.0)),
        g_field=zeros,
    )
    # zero state: residuals are (-1, +1) -> branch 2
    state = quadratic_state()
    zero_state = ClosedFormState(
        ExactSolution(
            value=lambda p: np.zeros(p.shape[0]),
            grad=lambda p: np.zeros_like(p),
            hess=lambda p: np.zeros((p.shape[0], 2, 2)),
        )
    )
    assert hjb_active_branch(zero_state, hjb, np.array([0.1, 0.2])) == 2


def test_single_branch_surrogate_is_plain_linear():
    hjb = get_problem("ex4.5-hjb")
    single = HJBSpec(
        name="single",
        domain=hjb.domain,
        controls=(1,),
        a_fields=hjb.a_fields[:1],
        b_fields=hjb.b_fields[:1],
        c_fields=hjb.c_fields[:1],
        f_fields=hjb.f_fields[:1],
        g_field=hjb.g_field,
        exact=hjb.exact,
        singular_sets=hjb.singular_sets,
    )
    state = ClosedFormState(hjb.exact)
    assert hjb_active_branch(state, single, np.array([1.0, 1.0])) == 1
    surrogate = hjb_surrogate(state, single)
    pts = sample_interior(single.domain, 50, 0, single.singular_sets)
    branch = single.branch(1)
    np.testing.assert_allclose(surrogate.a_field(pts), branch.a_field(pts))
    np.testing.assert_allclose(surrogate.f_field(pts), branch.f_field(pts))


def test_newton_cancellation_identity():
    # (L u_k - f) + L(v - u_k) == L v - f for random jets and random branches
    rng = np.random.default_rng(4)
    hjb = get_problem("ex4.5-hjb")
    pts = sample_interior(hjb.domain, 30, 1, hjb.singular_sets)
    for k in range(2):
        a = hjb.a_fields[k](pts)
        b = hjb.b_fields[k](pts)
        c = hjb.c_fields[k](pts)
        f = hjb.f_fields[k](pts)

        def apply_op(vals, grads, hessians):
            return (
                np.einsum("nij,nij->n", a, hessians)
                + np.einsum("ni,ni->n", b, grads)
                - c * vals
            )

        u = (rng.standard_normal(30), rng.standard_normal((30, 2)),
             rng.standard_normal((30, 2, 2)))
        v = (rng.standard_normal(30), rng.standard_normal((30, 2)),
             rng.standard_normal((30, 2, 2)))
        lhs = (apply_op(*u) - f) + apply_op(v[0] - u[0], v[1] - u[1], v[2] - u[2])
        rhs = apply_op(*v) - f
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_hjb_surrogate_residual_at_exact_state():
    hjb = get_problem("ex4.5-hjb")
    state = ClosedFormState(hjb.exact)
    pts = sample_interior(hjb.domain, 200, 2, hjb.singular_sets)
    surrogate = hjb_surrogate(state, hjb)
    assert surrogate_residual(state, surrogate, pts) < 1e-6


def test_ma_linearize_quadratic_state():
    ma = get_problem("ex4.6-ma")
    pts = sample_interior(ma.domain, 100, 0)
    surrogate = ma_linearize(quadratic_state(), ma.f_field, pts,
                             domain=ma.domain, g_field=ma.g_field)
    np.testing.assert_allclose(surrogate.a_field(pts), np.broadcast_to(np.eye(2), (100, 2, 2)))
    np.testing.assert_allclose(surrogate.f_field(pts), ma.f_field(pts) + 1.0)


def test_ma_newton_fixed_point():
    ma = get_problem("ex4.6-ma")
    state = ClosedFormState(ma.exact)
    pts = sample_interior(ma.domain, 150, 1)
    surrogate = ma_linearize(state, ma.f_field, pts, domain=ma.domain, g_field=ma.g_field)
    assert surrogate_residual(state, surrogate, pts) < 1e-12


def test_ma_spd_states_give_cordes_coefficients():
    ma = get_problem("ex4.6-ma")
    pts = sample_interior(ma.domain, 200, 3)
    surrogate = ma_linearize(ClosedFormState(ma.exact), ma.f_field, pts,
                             domain=ma.domain, g_field=ma.g_field)
    a = surrogate.a_field(pts)
    for k in range(a.shape[0]):
        assert cordes_ratio(a[k]) > 1.0  # n - 1 in two dimensions


def test_ma_linearize_rejects_concave_states():
    concave = ClosedFormState(
        ExactSolution(
            value=lambda p: -0.5 * np.sum(p**2, axis=1),
            grad=lambda p: -p,
            hess=lambda p: np.broadcast_to(-np.eye(2), (p.shape[0], 2, 2)).copy(),
        )
    )
    ma = get_problem("ex4.6-ma")
    pts = sample_interior(ma.domain, 50, 0)
    with pytest.raises(NonConvexityError):
        ma_linearize(concave, ma.f_field, pts, domain=ma.domain, g_field=ma.g_field)


def test_active_branch_invariant_to_common_source_shift():
    hjb = get_problem("ex4.5-hjb")
    shifted = HJBSpec(
        name="shifted",
        domain=hjb.domain,
        controls=hjb.controls,
        a_fields=hjb.a_fields,
        b_fields=hjb.b_fields,
        c_fields=hjb.c_fields,
        f_fields=tuple(
            (lambda f: (lambda p: f(p) + 7.5))(f) for f in hjb.f_fields
        ),
        g_field=hjb.g_field,
        exact=hjb.exact,
        singular_sets=hjb.singular_sets,
    )
    arch = NetworkArch(2, (8,))
    state = NetworkState(arch, init_network(arch, 0) + 0.05)
    pts = sample_interior(hjb.domain, 40, 5, hjb.singular_sets)
    from cordes_pinn.nonlinear import active_branches

    np.testing.assert_array_equal(
        active_branches(state, hjb, pts), active_branches(state, shifted, pts)
    )


def test_outer_config_budget_split():
    cfg = OuterConfig.from_total(40_000)
    assert cfg.warmup_epochs == 8_000
    assert cfg.outer_iterations == 4
    assert cfg.inner_epochs == 8_000


@pytest.mark.slow
def test_dual_loop_smoke_ma():
    ma = get_problem("ex4.6-ma")
    arch = NetworkArch(2, (16, 16))
    outer = OuterConfig(warmup_epochs=300, outer_iterations=2, inner_epochs=300)
    cfg = LossConfig(n_interior=800, n_boundary=200)
    result = solve_nonlinear(ma, arch, outer, cfg, seed=0, eval_every=150,
                             grid_resolution=30)
    phases = {row.phase for row in result.history}
    assert phases == {"warmup", "outer"}
    assert result.config["accepted_outer_steps"] >= 1
    assert all(np.isfinite(row.total_loss) for row in result.history)


@pytest.mark.slow
def test_dual_loop_smoke_hjb():
    hjb = get_problem("ex4.5-hjb")
    arch = NetworkArch(2, (16, 16))
    outer = OuterConfig(warmup_epochs=300, outer_iterations=1, inner_epochs=300)
    cfg = LossConfig(n_interior=800, n_boundary=200)
    result = solve_nonlinear(hjb, arch, outer, cfg, seed=0, eval_every=150,
                             grid_resolution=30)
    assert result.history[-1].epoch == 600
    outer_rows = [row for row in result.history if row.phase == "outer"]
    assert outer_rows and outer_rows[0].outer_k == 0
