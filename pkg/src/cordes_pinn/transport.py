"""Optimal transport through the Monge-Ampere equation.

For quadratic cost the optimal map is the gradient of a convex potential
solving det(D2 phi) * nu(grad phi) = mu. The solver runs a Newton-Kantorovich
outer loop: freezing the state turns the density composition into a linear
non-divergence equation whose principal matrix nu(grad phi_k) cof(D2 phi_k) is
SPD wherever the iterate stays convex, so the Cordes multiplier is built from
the principal part alone and the first-order convection term rides along
unpreconditioned.

The square-to-square benchmark has a closed-form map; its auxiliary profile
derivatives are hand-derived (q' collapses to (z^2 - 1/4) sin(8 pi z)) and
checked against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NetworkArch, forward_jets, init_network, packed_index, param_layout
from .autodiff import tape as T
from .exceptions import MassBalanceError, NonConvexityError
from .nonlinear import NetworkState, SurrogateLinearPDE, cofactor, surrogate_residual
from .problems.domains import Rectangle, eval_grid, sample_boundary, sample_interior
from .problems.registry import ExactSolution
from .training.loop import TrainResult, errors_l2_linf, run_adam_loop
from .training.losses import LossConfig, prepare_system, system_losses

__all__ = [
    "TransportProblem",
    "PotentialState",
    "example51_fields",
    "ot_linearize",
    "solve_transport",
    "transport_map",
    "pushforward_check",
    "q_profile",
    "q_profile_d1",
    "q_profile_d2",
]


@dataclass
class TransportProblem:
    """Densities, domains, and (optionally) the analytic map for validation."""

    name: str
    mu_field: callable  # source density on the source domain
    nu_field: callable  # target density on the target domain
    nu_grad_field: callable  # gradient of nu in mapped coordinates
    source_domain: Rectangle
    target_domain: Rectangle
    analytic_map: callable | None = None
    analytic_potential: ExactSolution | None = None
    problem_class: str = field(default="transport")
    singular_sets: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.source_domain.dim

    def mass_balance(self, n_mc: int = 200_000, seed: int = 0) -> tuple[float, float]:
        """Monte Carlo masses of mu and nu over their domains."""
        src = sample_interior(self.source_domain, n_mc, seed)
        tgt = sample_interior(self.target_domain, n_mc, seed + 1)
        vol_s = float(np.prod(np.asarray(self.source_domain.hi) - np.asarray(self.source_domain.lo)))
        vol_t = float(np.prod(np.asarray(self.target_domain.hi) - np.asarray(self.target_domain.lo)))
        return (
            float(np.mean(self.mu_field(src))) * vol_s,
            float(np.mean(self.nu_field(tgt))) * vol_t,
        )


@dataclass
class PotentialState:
    """Network potential phi with a pinned value removing the constant mode."""

    arch: NetworkArch
    theta: np.ndarray
    anchor_point: np.ndarray
    anchor_value: float
    outer_k: int = 0

    def jets(self, points: np.ndarray):
        state = NetworkState(self.arch, self.theta)
        return state.jets(points)

    def normalize(self) -> "PotentialState":
        """Shift the output bias so phi(anchor) equals the anchored value.

        The map T = grad phi and every loss term depend only on derivatives,
        so the shift is exact and training-neutral.
        """
        from .autodiff import eval_values

        current = float(eval_values(self.arch, self.theta, self.anchor_point[None])[0])
        layout = param_layout(self.arch)
        _, b_slice, _ = layout.slices[-1]
        theta = self.theta.copy()
        theta[b_slice] -= current - self.anchor_value
        return PotentialState(self.arch, theta, self.anchor_point, self.anchor_value,
                              self.outer_k)


def transport_map(state, x: np.ndarray) -> np.ndarray:
    """Brenier map T(x) = grad phi(x); accepts one point or a batch."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _, grads, _ = state.jets(pts)
    return grads[0] if np.ndim(x) == 1 else grads


# --------------------------------------------------------------------------
# square-to-square benchmark with a closed-form map
# --------------------------------------------------------------------------

_PI = np.pi
_Q_C0 = 1.0 / (256.0 * _PI**3) + 1.0 / (32.0 * _PI)


def q_profile(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return (-(z**2) / (8.0 * _PI) + _Q_C0) * np.cos(8.0 * _PI * z) + z * np.sin(
        8.0 * _PI * z
    ) / (32.0 * _PI**2)


def q_profile_d1(z: np.ndarray) -> np.ndarray:
    # the textbook form telescopes: q'(z) = (z^2 - 1/4) sin(8 pi z)
    z = np.asarray(z, dtype=float)
    return (z**2 - 0.25) * np.sin(8.0 * _PI * z)


def q_profile_d2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return 2.0 * z * np.sin(8.0 * _PI * z) + 8.0 * _PI * (z**2 - 0.25) * np.cos(8.0 * _PI * z)


def example51_fields() -> TransportProblem:
    """Square-to-square transport: oscillatory source density, uniform target."""

    def mu(points):
        x1, x2 = points[:, 0], points[:, 1]
        q1, q2 = q_profile(x1), q_profile(x2)
        d1, d2 = q_profile_d1(x1), q_profile_d1(x2)
        s1, s2 = q_profile_d2(x1), q_profile_d2(x2)
        return (
            1.0
            + 4.0 * (s1 * q2 + q1 * s2)
            + 16.0 * (q1 * q2 * s1 * s2 - d1**2 * d2**2)
        )

    def nu(points):
        return np.ones(points.shape[0])

    def nu_grad(points):
        return np.zeros_like(points)

    def analytic_map(points):
        x1, x2 = points[:, 0], points[:, 1]
        out = np.empty_like(points)
        out[:, 0] = x1 + 4.0 * q_profile_d1(x1) * q_profile(x2)
        out[:, 1] = x2 + 4.0 * q_profile(x1) * q_profile_d1(x2)
        return out

    def pot_value(points):
        return 0.5 * np.sum(points**2, axis=1) + 4.0 * q_profile(points[:, 0]) * q_profile(
            points[:, 1]
        )

    def pot_hess(points):
        x1, x2 = points[:, 0], points[:, 1]
        h = np.empty((points.shape[0], 2, 2))
        h[:, 0, 0] = 1.0 + 4.0 * q_profile_d2(x1) * q_profile(x2)
        h[:, 0, 1] = h[:, 1, 0] = 4.0 * q_profile_d1(x1) * q_profile_d1(x2)
        h[:, 1, 1] = 1.0 + 4.0 * q_profile(x1) * q_profile_d2(x2)
        return h

    square = Rectangle((-0.5, -0.5), (0.5, 0.5))
    return TransportProblem(
        name="ex5.1-ot",
        mu_field=mu,
        nu_field=nu,
        nu_grad_field=nu_grad,
        source_domain=square,
        target_domain=square,
        analytic_map=analytic_map,
        analytic_potential=ExactSolution(value=pot_value, grad=analytic_map, hess=pot_hess),
    )


# --------------------------------------------------------------------------
# Newton-Kantorovich outer loop
# --------------------------------------------------------------------------


def _clamp_to_rectangle(points: np.ndarray, rect: Rectangle) -> np.ndarray:
    return np.clip(points, np.asarray(rect.lo), np.asarray(rect.hi))


def ot_linearize(state, prob: TransportProblem, points: np.ndarray,
                 eig_floor: float = 1e-6, max_clamped_fraction: float = 0.05,
                 k: int | None = None) -> SurrogateLinearPDE:
    """Linearize det(D2 phi) nu(grad phi) = mu at a frozen potential.

    Principal part nu(grad phi_k) cof(D2 phi_k), convection
    det(D2 phi_k) grad nu(grad phi_k), Newton right-hand side
    mu - det(D2 phi_k) nu(grad phi_k). The state terms are folded into the
    surrogate source so the inner loop trains phi_{k+1} directly; the Cordes
    multiplier downstream uses the principal part only.
    """
    d = prob.dim
    eye = np.eye(d)

    def frozen(pts):
        _, grads, hessians = state.jets(pts)
        eig_min = np.linalg.eigvalsh(hessians)[:, 0]
        bad = eig_min < eig_floor
        if np.any(bad):
            hessians = hessians + np.where(bad, eig_floor - eig_min, 0.0)[:, None, None] * eye
        return grads, hessians, float(np.mean(bad))

    _, _, bad_frac = frozen(points)
    if bad_frac > max_clamped_fraction:
        raise NonConvexityError(
            f"{100 * bad_frac:.1f}% of transport Hessians fell below the convexity floor"
        )

    def a_of(pts):
        grads, hessians, _ = frozen(pts)
        y = _clamp_to_rectangle(grads, prob.target_domain)
        return prob.nu_field(y)[:, None, None] * cofactor(hessians)

    def b_of(pts):
        grads, hessians, _ = frozen(pts)
        y = _clamp_to_rectangle(grads, prob.target_domain)
        det = np.linalg.det(hessians)
        return det[:, None] * prob.nu_grad_field(y)

    def f_of(pts):
        grads, hessians, _ = frozen(pts)
        y = _clamp_to_rectangle(grads, prob.target_domain)
        det = np.linalg.det(hessians)
        nu = prob.nu_field(y)
        a = nu[:, None, None] * cofactor(hessians)
        b = det[:, None] * prob.nu_grad_field(y)
        newton_rhs = prob.mu_field(pts) - det * nu
        folded = newton_rhs + np.einsum("nij,nij->n", a, hessians) + np.einsum(
            "ni,ni->n", b, grads
        )
        return folded

    a_sample = a_of(points)
    ratios = np.einsum("nii->n", a_sample) ** 2 / np.sum(a_sample**2, axis=(1, 2))
    lam = np.einsum("nii->n", a_sample) / np.sum(a_sample**2, axis=(1, 2))
    if np.min(ratios) <= d - 1 or np.min(lam) <= 0.0:
        raise NonConvexityError("transport surrogate lost the Cordes property")
    return SurrogateLinearPDE(
        name=f"{prob.name}[newton k={k}]",
        domain=prob.source_domain,
        a_field=a_of,
        b_field=b_of,
        c_field=None,
        f_field=f_of,
        g_field=lambda pts: np.zeros(pts.shape[0]),
        provenance={
            "kind": "ot_iteration",
            "outer_k": k,
            "min_cordes_ratio": float(np.min(ratios)),
            "min_multiplier": float(np.min(lam)),
        },
    )


def _second_bc_penalty(tape, arch, theta, bc_points, target: Rectangle):
    """Squared distance from grad phi(boundary) to the target set.

    Zero whenever the mapped point lies inside the target rectangle, so the
    penalty only discourages leaking mass outside the target support.
    """
    jet = forward_jets(tape, arch, theta, bc_points, order=1)
    grads = jet.grad  # (m, d)
    lo = np.asarray(target.lo, dtype=bc_points.dtype)
    hi = np.asarray(target.hi, dtype=bc_points.dtype)
    over = T.relu(T.add_const(grads, -hi))
    under = T.relu(T.rsub_const(lo, grads))
    dist2 = T.add(T.sum_all(T.square(over)), T.sum_all(T.square(under)))
    return T.scale(dist2, 1.0 / bc_points.shape[0])


def _quadratic_warmup_builder(arch, points, bc_points, target_rect, cfg):
    """Fit the full 2-jet of phi to |x|^2/2: the seed map is the identity.

    Matching the Hessian to I is what guarantees the first linearization sees
    a convex iterate.
    """
    dtype = np.dtype(cfg.dtype)
    pts = points.astype(dtype)
    bcp = bc_points.astype(dtype)
    d = pts.shape[1]
    pidx = packed_index(d)
    val_target = (0.5 * np.sum(points.astype(float) ** 2, axis=1)).astype(dtype)
    hess_target = np.broadcast_to(
        pidx.pack(np.eye(d)).astype(dtype), (pts.shape[0], pidx.n_pairs)
    )

    def builder(tape, theta):
        jet = forward_jets(tape, arch, theta, pts, order=2)
        fit_v = T.mean_all(T.square(T.add_const(jet.value, -val_target)))
        fit_g = T.mean_all(T.square(T.add_const(jet.grad, -pts)))
        fit_h = T.mean_all(T.square(T.add_const(jet.hess, -hess_target)))
        li = T.add(T.add(fit_v, fit_g), fit_h)
        lb = _second_bc_penalty(tape, arch, theta, bcp, target_rect)
        total = T.add(T.scale(li, cfg.w_int), T.scale(lb, cfg.w_bc))
        return total, li, lb

    return builder


def _map_metrics_fn(arch, prob: TransportProblem, resolution: int):
    if prob.analytic_map is None:
        return None
    grid = eval_grid(prob.source_domain, resolution)
    exact = prob.analytic_map(grid)

    def metrics(theta):
        jet = forward_jets(T.Tape(), arch, theta, grid, order=1)
        diff = jet.grad.value - exact
        l2 = float(np.sqrt(np.mean(diff**2)))
        linf = float(np.max(np.abs(diff)))
        return l2, linf

    return metrics


def solve_transport(prob: TransportProblem, arch: NetworkArch, outer_cfg,
                    loss_cfg: LossConfig, seed: int, eval_every: int = 500,
                    lr: float = 3e-4, grid_resolution: int = 200,
                    mass_tolerance: float = 0.01):
    """Warm-up to the identity map, then Newton-Kantorovich refinement.

    Returns (PotentialState, TrainResult); history phases are labeled and the
    l2/linf columns track the map error against the analytic map when known.
    """
    mass_mu, mass_nu = prob.mass_balance(seed=seed)
    if abs(mass_mu - mass_nu) > mass_tolerance * max(abs(mass_nu), 1e-12):
        raise MassBalanceError(
            f"source mass {mass_mu:.4f} and target mass {mass_nu:.4f} differ by more "
            f"than {100 * mass_tolerance:.1f}%"
        )
    points = sample_interior(prob.source_domain, loss_cfg.n_interior, seed + 1,
                             prob.singular_sets)
    bc_points = sample_boundary(prob.source_domain, loss_cfg.n_boundary, seed + 2)
    theta = init_network(arch, seed)
    lo = np.asarray(prob.source_domain.lo)
    hi = np.asarray(prob.source_domain.hi)
    center = 0.5 * (lo + hi)
    anchor_value = float(0.5 * np.sum(center**2))
    state = PotentialState(arch, theta, center, anchor_value)
    metrics_fn = _map_metrics_fn(arch, prob, grid_resolution)
    pool = T.BufferPool()

    builder = _quadratic_warmup_builder(arch, points, bc_points, prob.target_domain,
                                        loss_cfg)
    warmup_lr = getattr(outer_cfg, "warmup_lr", lr)
    theta, _, history = run_adam_loop(
        arch, state.theta, builder, outer_cfg.warmup_epochs, eval_every,
        metrics_fn=metrics_fn, lr=warmup_lr, phase="warmup", pool=pool,
    )
    state = PotentialState(arch, theta, center, anchor_value).normalize()

    epoch_offset = outer_cfg.warmup_epochs
    monitors: list[float] = []
    ma_residuals: list[float] = []
    accepted = 0
    rejected_at = None
    dtype = np.dtype(loss_cfg.dtype)
    bcp = bc_points.astype(dtype)

    for k in range(outer_cfg.outer_iterations):
        prev_theta = state.theta.copy()
        surrogate = ot_linearize(
            state, prob, points, eig_floor=outer_cfg.eig_floor,
            max_clamped_fraction=outer_cfg.max_clamped_fraction, k=k,
        )
        system = prepare_system(surrogate, points, bc_points, loss_cfg)

        def builder(tape, theta_, system=system):
            li, _ = system_losses(tape, arch, theta_, system)
            lb = _second_bc_penalty(tape, arch, theta_, bcp, prob.target_domain)
            total = T.add(T.scale(li, loss_cfg.w_int), T.scale(lb, loss_cfg.w_bc))
            return total, li, lb

        theta, _, history = run_adam_loop(
            arch, state.theta, builder, outer_cfg.inner_epochs, eval_every,
            metrics_fn=metrics_fn, lr=lr, phase="outer", outer_k=k,
            epoch_offset=epoch_offset, history=history, pool=pool,
        )
        epoch_offset += outer_cfg.inner_epochs
        state = PotentialState(arch, theta, center, anchor_value, outer_k=k + 1).normalize()
        monitor = surrogate_residual(NetworkState(arch, state.theta), surrogate, points)
        ma_residuals.append(_ma_residual(state, prob, points))
        if monitors and monitor > monitors[-1] + 1e-12:
            state = PotentialState(arch, prev_theta, center, anchor_value, outer_k=k)
            rejected_at = k
            break
        monitors.append(monitor)
        accepted += 1

    config = {
        "problem": prob.name,
        "arch": list(arch.hidden_widths),
        "warmup_epochs": outer_cfg.warmup_epochs,
        "outer_iterations": outer_cfg.outer_iterations,
        "inner_epochs": outer_cfg.inner_epochs,
        "accepted_outer_steps": accepted,
        "rejected_at": rejected_at,
        "surrogate_residuals": monitors,
        "monge_ampere_residuals": ma_residuals,
        "mass_mu": mass_mu,
        "mass_nu": mass_nu,
        **loss_cfg.to_dict(),
    }
    result = TrainResult(params=state.theta, history=history, seed=seed, config=config)
    return state, result


def _ma_residual(state: PotentialState, prob: TransportProblem,
                 points: np.ndarray) -> float:
    """Mean |det(D2 phi) nu(grad phi) - mu| of the current state."""
    _, grads, hessians = state.jets(points)
    y = _clamp_to_rectangle(grads, prob.target_domain)
    det = np.linalg.det(hessians)
    return float(np.mean(np.abs(det * prob.nu_field(y) - prob.mu_field(points))))


def pushforward_check(state, prob: TransportProblem, n_mc: int = 100_000,
                      seed: int = 0, bins: int = 10) -> dict:
    """Monte Carlo pushforward audit of the learned map.

    Samples x ~ mu by rejection, pushes through T = grad phi, and compares the
    binned empirical measure on the target rectangle against nu in total
    variation. Samples landing outside the target are counted and then
    clipped onto the boundary bin for the histogram.
    """
    rng = np.random.default_rng(seed)
    lo_s = np.asarray(prob.source_domain.lo)
    hi_s = np.asarray(prob.source_domain.hi)
    vol_s = float(np.prod(hi_s - lo_s))
    probe = sample_interior(prob.source_domain, 20_000, seed + 7)
    envelope = 1.1 * float(np.max(prob.mu_field(probe)))
    samples = np.empty((0, prob.dim))
    while samples.shape[0] < n_mc:
        draw = rng.uniform(lo_s, hi_s, size=(2 * n_mc, prob.dim))
        accept = rng.uniform(0.0, envelope, size=2 * n_mc) < prob.mu_field(draw)
        samples = np.vstack([samples, draw[accept]])
    samples = samples[:n_mc]

    mapped = transport_map(state, samples)
    lo_t = np.asarray(prob.target_domain.lo)
    hi_t = np.asarray(prob.target_domain.hi)
    outside = np.any((mapped < lo_t) | (mapped > hi_t), axis=1)
    outside_fraction = float(np.mean(outside))
    clipped = np.clip(mapped, lo_t, hi_t)

    edges = [np.linspace(lo_t[k], hi_t[k], bins + 1) for k in range(prob.dim)]
    hist, _ = np.histogramdd(clipped, bins=edges)
    empirical = hist.ravel() / n_mc

    # reference bin masses of nu (midpoint rule on a fine subgrid per bin)
    sub = 4
    fine_edges = [np.linspace(lo_t[k], hi_t[k], bins * sub + 1) for k in range(prob.dim)]
    mids = [0.5 * (e[1:] + e[:-1]) for e in fine_edges]
    mesh = np.meshgrid(*mids, indexing="ij")
    fine_pts = np.stack([m.ravel() for m in mesh], axis=1)
    fine_vals = prob.nu_field(fine_pts).reshape([bins * sub] * prob.dim)
    cell_vol = np.prod([(hi_t[k] - lo_t[k]) / (bins * sub) for k in range(prob.dim)])
    coarse = fine_vals.reshape(bins, sub, bins, sub).sum(axis=(1, 3)) * cell_vol
    reference = (coarse / coarse.sum()).ravel()

    tv = 0.5 * float(np.sum(np.abs(empirical - reference)))
    return {
        "tv_distance": tv,
        "outside_fraction": outside_fraction,
        "n_samples": n_mc,
        "bins": bins,
        "boundary_failure": outside_fraction > 0.01,
    }
