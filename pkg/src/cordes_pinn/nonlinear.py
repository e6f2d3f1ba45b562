"""Dual-loop drivers for fully nonlinear problems.

The outer loop freezes the current network state and projects the nonlinear
operator onto a surrogate linear non-divergence equation: Hamilton-Jacobi-
Bellman via the active control branch of the pointwise sup (semi-smooth Newton
step), Monge-Ampere via the cofactor linearization of the determinant. The
inner loop trains the same network against the surrogate with the Cordes-
preconditioned loss, warm-starting from the previous outer iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NetworkArch, eval_jets, forward_jets, init_network, packed_index
from .autodiff import tape as T
from .cordes import cordes_ratio
from .exceptions import NonConvexityError
from .problems.domains import jitter_points, sample_boundary, sample_interior
from .problems.registry import HJBSpec, ProblemSpec
from .training.loop import TrainResult, grid_metrics_fn, run_adam_loop
from .training.losses import LossConfig, prepare_system, system_losses

__all__ = [
    "SurrogateLinearPDE",
    "OuterConfig",
    "NetworkState",
    "ClosedFormState",
    "cofactor",
    "hjb_active_branch",
    "active_branches",
    "hjb_surrogate",
    "hjb_outer_step",
    "ma_linearize",
    "solve_nonlinear",
]


@dataclass
class NetworkState:
    """Frozen network iterate exposing inference jets."""

    arch: NetworkArch
    theta: np.ndarray

    def jets(self, points: np.ndarray):
        values, grads, hess_packed = eval_jets(self.arch, self.theta, points)
        pidx = packed_index(self.arch.input_dim)
        return values, grads, pidx.unpack(hess_packed)


@dataclass
class ClosedFormState:
    """Closed-form field standing in for a network state (fixed-point tests)."""

    exact: object  # ExactSolution-like

    def jets(self, points: np.ndarray):
        return self.exact.value(points), self.exact.grad(points), self.exact.hess(points)


@dataclass
class SurrogateLinearPDE:
    """One frozen outer-loop linearization, shaped like a linear ProblemSpec."""

    name: str
    domain: object
    a_field: callable
    b_field: callable | None
    c_field: callable | None
    f_field: callable
    g_field: callable
    exact: object | None = None
    problem_class: str = "linear"
    singular_sets: tuple[str, ...] = ()
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def coefficients(self, points: np.ndarray):
        a = self.a_field(points)
        b = self.b_field(points) if self.b_field is not None else None
        c = self.c_field(points) if self.c_field is not None else None
        return a, b, c


@dataclass
class OuterConfig:
    """Budgets and guards for the outer Newton loop."""

    warmup_epochs: int = 8_000
    outer_iterations: int = 4
    inner_epochs: int = 8_000
    eig_floor: float = 1e-6
    max_clamped_fraction: float = 0.05
    initial_potential: str = "quadratic"
    warmup_lr: float = 3e-3  # supervised seed fit tolerates a hotter step

    def __post_init__(self):
        if self.warmup_epochs < 0 or self.inner_epochs <= 0 or self.outer_iterations < 0:
            raise ValueError("epoch budgets must be positive")
        if self.eig_floor < 0:
            raise ValueError("eigenvalue floor must be >= 0")

    @classmethod
    def from_total(cls, total_epochs: int, outer_iterations: int = 4,
                   warmup_fraction: float = 0.2, **kw) -> "OuterConfig":
        warmup = int(round(total_epochs * warmup_fraction))
        inner = max(1, (total_epochs - warmup) // max(outer_iterations, 1))
        return cls(warmup_epochs=warmup, outer_iterations=outer_iterations,
                   inner_epochs=inner, **kw)


def cofactor(m: np.ndarray) -> np.ndarray:
    """Cofactor matrix of 2x2 or 3x3 matrices (batched on the leading axis)."""
    m = np.asarray(m, dtype=float)
    single = m.ndim == 2
    if single:
        m = m[None]
    d = m.shape[-1]
    if m.shape[-2] != d or d not in (2, 3):
        raise ValueError(f"cofactor supports 2x2 and 3x3 matrices, got shape {m.shape}")
    out = np.empty_like(m)
    if d == 2:
        out[:, 0, 0] = m[:, 1, 1]
        out[:, 0, 1] = -m[:, 1, 0]
        out[:, 1, 0] = -m[:, 0, 1]
        out[:, 1, 1] = m[:, 0, 0]
    else:
        for i in range(3):
            for j in range(3):
                rows = [r for r in range(3) if r != i]
                cols = [c for c in range(3) if c != j]
                minor = (
                    m[:, rows[0], cols[0]] * m[:, rows[1], cols[1]]
                    - m[:, rows[0], cols[1]] * m[:, rows[1], cols[0]]
                )
                out[:, i, j] = (-1.0) ** (i + j) * minor
    return out[0] if single else out


def active_branches(u_state, hjb: HJBSpec, points: np.ndarray) -> np.ndarray:
    """Index (into hjb.controls) of the branch attaining the pointwise sup.

    Ties break toward the lowest branch index (numpy argmax keeps the first
    maximum), matching the Clarke selection convention used here.
    """
    pts = jitter_points(points, hjb.singular_sets)
    values, grads, hessians = u_state.jets(pts)
    residuals = hjb.branch_residuals(pts, values, grads, hessians)
    return np.argmax(residuals, axis=0)


def hjb_active_branch(u_state, hjb: HJBSpec, x: np.ndarray) -> int:
    """Active control label at one point."""
    idx = active_branches(u_state, hjb, np.atleast_2d(np.asarray(x, dtype=float)))
    return hjb.controls[int(idx[0])]


def _piecewise_field(fields, branch_of_points):
    """Blend per-branch fields by the active-branch index at each point."""

    def field_fn(points):
        idx = branch_of_points(points)
        parts = [f(points) for f in fields]
        stacked = np.stack(parts)
        return np.take_along_axis(
            stacked, idx.reshape((1,) + idx.shape + (1,) * (stacked.ndim - 2)), axis=0
        )[0]

    return field_fn


def hjb_surrogate(u_state, hjb: HJBSpec, k: int | None = None) -> SurrogateLinearPDE:
    """Frozen-branch linear PDE: coefficients follow the state's active branch.

    The semi-smooth Newton step around the frozen state cancels the state term
    exactly, so the surrogate is simply the active branch's linear equation;
    branch indices vary point by point.
    """

    def branch_of(points):
        return active_branches(u_state, hjb, points)

    return SurrogateLinearPDE(
        name=f"{hjb.name}[newton]",
        domain=hjb.domain,
        a_field=_piecewise_field(hjb.a_fields, branch_of),
        b_field=_piecewise_field(hjb.b_fields, branch_of),
        c_field=_piecewise_field(hjb.c_fields, branch_of),
        f_field=_piecewise_field(hjb.f_fields, branch_of),
        g_field=hjb.g_field,
        exact=hjb.exact,
        singular_sets=hjb.singular_sets,
        provenance={"kind": "hjb_branch", "outer_k": k},
    )


def _clamped_hessians(hessians: np.ndarray, floor: float,
                      max_bad_fraction: float) -> tuple[np.ndarray, float]:
    """Shift Hessians with eigenvalues below the floor back to the SPD cone."""
    d = hessians.shape[-1]
    eig_min = np.linalg.eigvalsh(hessians)[:, 0]
    bad = eig_min < floor
    frac = float(np.mean(bad))
    if frac > max_bad_fraction:
        raise NonConvexityError(
            f"{100 * frac:.1f}% of points have Hessian eigenvalues below "
            f"{floor:g}; warm start is not convex enough"
        )
    if np.any(bad):
        shift = np.where(bad, floor - eig_min, 0.0)
        hessians = hessians + shift[:, None, None] * np.eye(d)
    return hessians, frac


def ma_linearize(u_state, f_field, points: np.ndarray, eig_floor: float = 1e-6,
                 max_clamped_fraction: float = 0.05,
                 k: int | None = None, g_field=None, domain=None,
                 exact=None) -> SurrogateLinearPDE:
    """Cofactor linearization of det(D2 u) = f at a frozen state.

    The surrogate reads cof(D2 u_k) : D2 u = f - det(D2 u_k) + cof(D2 u_k):D2 u_k;
    states with SPD Hessians produce SPD coefficients, which satisfy the
    two-dimensional Cordes inequality automatically (asserted per point).
    """
    _, _, hessians = u_state.jets(points)
    _clamped_hessians(hessians, eig_floor, max_clamped_fraction)  # early guard

    def a_of(pts):
        _, _, h = u_state.jets(pts)
        hc, _ = _clamped_hessians(h, eig_floor, 1.0)
        return cofactor(hc)

    def f_of(pts):
        _, _, h = u_state.jets(pts)
        hc, _ = _clamped_hessians(h, eig_floor, 1.0)
        a = cofactor(hc)
        det = hc[:, 0, 0] * hc[:, 1, 1] - hc[:, 0, 1] * hc[:, 1, 0]
        return f_field(pts) - det + np.einsum("nij,nij->n", a, hc)

    a_sample = a_of(points)
    ratios = np.einsum("nii->n", a_sample) ** 2 / np.sum(a_sample**2, axis=(1, 2))
    if np.min(ratios) <= a_sample.shape[-1] - 1:
        raise NonConvexityError("surrogate coefficients lost the Cordes property")
    return SurrogateLinearPDE(
        name="ma[newton]" if k is None else f"ma[newton k={k}]",
        domain=domain,
        a_field=a_of,
        b_field=None,
        c_field=None,
        f_field=f_of,
        g_field=g_field,
        exact=exact,
        provenance={"kind": "ma_iteration", "outer_k": k,
                    "min_cordes_ratio": float(np.min(ratios))},
    )


def hjb_outer_step(u_state: NetworkState, hjb: HJBSpec, points: np.ndarray,
                   bc_points: np.ndarray, cfg: LossConfig, inner_epochs: int,
                   eval_every: int = 500, lr: float = 3e-4, k: int | None = None,
                   metrics_fn=None, history=None, epoch_offset: int = 0,
                   pool=None) -> tuple[SurrogateLinearPDE, NetworkState]:
    """One semi-smooth Newton step: freeze branches, train the surrogate."""
    surrogate = hjb_surrogate(u_state, hjb, k=k)
    system = prepare_system(surrogate, points, bc_points, cfg)

    def builder(tape, theta):
        li, lb = system_losses(tape, u_state.arch, theta, system)
        total = T.add(T.scale(li, cfg.w_int), T.scale(lb, cfg.w_bc))
        return total, li, lb

    theta, _, _ = run_adam_loop(
        u_state.arch, u_state.theta, builder, inner_epochs, eval_every,
        metrics_fn=metrics_fn, lr=lr, phase="outer", outer_k=k,
        epoch_offset=epoch_offset, history=history, pool=pool,
    )
    return surrogate, NetworkState(u_state.arch, theta)


def surrogate_residual(state: NetworkState, surrogate: SurrogateLinearPDE,
                       points: np.ndarray) -> float:
    """Mean absolute residual of the state against a frozen surrogate."""
    pts = jitter_points(points, surrogate.singular_sets)
    values, grads, hessians = state.jets(pts)
    a, b, c = surrogate.coefficients(pts)
    r = np.einsum("nij,nij->n", a, hessians)
    if b is not None:
        r += np.einsum("ni,ni->n", b, grads)
    if c is not None:
        r -= c * values
    return float(np.mean(np.abs(r - surrogate.f_field(pts))))


def _quadratic_seed_builder(arch, system_points, bc_points, g_bc, cfg):
    """Warm-up loss: fit the 2-jet of the convex seed plus boundary data.

    The seed |x|^2/2 is lifted by the mean boundary offset (a constant, so
    its Hessian stays the identity) and matched by value, gradient and
    Hessian; jet matching is what actually lands the state inside the convex
    cone before the first linearization. The Dirichlet term runs at weight 1
    during warm-up: the full boundary weight would drag the surface toward
    data that the seed cannot satisfy and dent it non-convex.
    """
    dtype = np.dtype(cfg.dtype)
    pts = np.asarray(system_points).astype(dtype)
    bcp = np.asarray(bc_points).astype(dtype)
    d = pts.shape[1]
    pidx = packed_index(d)
    lift = float(np.mean(np.asarray(g_bc, dtype=float)
                         - 0.5 * np.sum(np.asarray(bc_points, dtype=float) ** 2, axis=1)))
    tgt = (0.5 * np.sum(np.asarray(system_points, dtype=float) ** 2, axis=1) + lift).astype(dtype)
    hess_tgt = np.broadcast_to(
        pidx.pack(np.eye(d)).astype(dtype), (pts.shape[0], pidx.n_pairs)
    )
    gb = np.asarray(g_bc).astype(dtype)
    w_bc_warm = min(cfg.w_bc, 1.0)

    def builder(tape, theta):
        jet = forward_jets(tape, arch, theta, pts, order=2)
        fit_value = T.mean_all(T.square(T.add_const(jet.value, -tgt)))
        fit_grad = T.mean_all(T.square(T.add_const(jet.grad, -pts)))
        fit_hess = T.mean_all(T.square(T.add_const(jet.hess, -hess_tgt)))
        li = T.add(T.add(fit_value, fit_grad), fit_hess)
        jet_bc = forward_jets(tape, arch, theta, bcp, order=0)
        lb = T.mean_all(T.square(T.add_const(jet_bc.value, -gb)))
        total = T.add(T.scale(li, cfg.w_int), T.scale(lb, w_bc_warm))
        return total, li, lb

    return builder


def solve_nonlinear(spec, arch: NetworkArch, outer_cfg: OuterConfig,
                    loss_cfg: LossConfig, seed: int, eval_every: int = 500,
                    lr: float = 3e-4, grid_resolution: int = 200) -> TrainResult:
    """Warm-up followed by K outer linearization steps with inner training.

    Outer steps are accepted only if the surrogate residual of the refined
    state does not increase; a rejected step reverts the parameters and ends
    the outer loop (recorded in the result config).
    """
    if spec.problem_class not in ("hjb", "monge_ampere"):
        raise ValueError(f"solve_nonlinear expects hjb or monge_ampere, got {spec.problem_class}")
    points = sample_interior(spec.domain, loss_cfg.n_interior, seed + 1,
                             spec.singular_sets)
    bc_points = sample_boundary(spec.domain, loss_cfg.n_boundary, seed + 2)
    theta = init_network(arch, seed)
    history = []
    metrics_fn = grid_metrics_fn(arch, spec, grid_resolution)
    pool = T.BufferPool()

    # warm-up phase
    if spec.problem_class == "monge_ampere":
        builder = _quadratic_seed_builder(arch, points, bc_points,
                                          spec.g_field(bc_points), loss_cfg)
        theta, _, history = run_adam_loop(
            arch, theta, builder, outer_cfg.warmup_epochs, eval_every,
            metrics_fn=metrics_fn, lr=outer_cfg.warmup_lr, phase="warmup", pool=pool,
        )
    else:
        warm_spec = spec.branch(spec.controls[0])
        system = prepare_system(warm_spec, points, bc_points, loss_cfg)

        def builder(tape, theta_):
            li, lb = system_losses(tape, arch, theta_, system)
            total = T.add(T.scale(li, loss_cfg.w_int), T.scale(lb, loss_cfg.w_bc))
            return total, li, lb

        theta, _, history = run_adam_loop(
            arch, theta, builder, outer_cfg.warmup_epochs, eval_every,
            metrics_fn=metrics_fn, lr=lr, phase="warmup", pool=pool,
        )

    state = NetworkState(arch, theta)
    epoch_offset = outer_cfg.warmup_epochs
    monitors: list[float] = []
    accepted = 0
    rejected_at = None

    for k in range(outer_cfg.outer_iterations):
        prev_theta = state.theta.copy()
        if spec.problem_class == "monge_ampere":
            surrogate = ma_linearize(
                state, spec.f_field, points, eig_floor=outer_cfg.eig_floor,
                max_clamped_fraction=outer_cfg.max_clamped_fraction, k=k,
                g_field=spec.g_field, domain=spec.domain, exact=spec.exact,
            )
            system = prepare_system(surrogate, points, bc_points, loss_cfg)

            def builder(tape, theta_, system=system):
                li, lb = system_losses(tape, arch, theta_, system)
                total = T.add(T.scale(li, loss_cfg.w_int), T.scale(lb, loss_cfg.w_bc))
                return total, li, lb

            theta, _, history = run_adam_loop(
                arch, state.theta, builder, outer_cfg.inner_epochs, eval_every,
                metrics_fn=metrics_fn, lr=lr, phase="outer", outer_k=k,
                epoch_offset=epoch_offset, history=history, pool=pool,
            )
            state = NetworkState(arch, theta)
        else:
            surrogate, state = hjb_outer_step(
                state, spec, points, bc_points, loss_cfg, outer_cfg.inner_epochs,
                eval_every=eval_every, lr=lr, k=k, metrics_fn=metrics_fn,
                history=history, epoch_offset=epoch_offset, pool=pool,
            )
        epoch_offset += outer_cfg.inner_epochs
        monitor = surrogate_residual(state, surrogate, points)
        if monitors and monitor > monitors[-1] + 1e-12:
            # monotone acceptance: revert to the previous iterate and stop
            state = NetworkState(arch, prev_theta)
            rejected_at = k
            break
        monitors.append(monitor)
        accepted += 1

    config = {
        "problem": spec.name,
        "arch": list(arch.hidden_widths),
        "warmup_epochs": outer_cfg.warmup_epochs,
        "outer_iterations": outer_cfg.outer_iterations,
        "inner_epochs": outer_cfg.inner_epochs,
        "accepted_outer_steps": accepted,
        "rejected_at": rejected_at,
        "surrogate_residuals": monitors,
        **loss_cfg.to_dict(),
    }
    return TrainResult(params=state.theta, history=history, seed=seed, config=config)
