"""Loss assembly for collocation training.

The interior residual A:D2u + b.grad u - c u - f is evaluated as a single
row-weighted contraction against the network jet; in cordes mode each point's
residual is scaled by the optimal multiplier tr(A)/(tr(A^2) + delta) before
squaring, in plain mode the raw mean squared residual is used.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..autodiff import forward_jets, packed_index
from ..autodiff import tape as T

__all__ = [
    "LossConfig",
    "CollocationSystem",
    "prepare_system",
    "linear_residual",
    "cordes_loss",
    "boundary_loss",
    "composite_loss",
]


@dataclass
class LossConfig:
    """Weights, stabilizer, sampling sizes and preconditioning mode."""

    w_int: float = 1.0
    w_bc: float = 100.0
    delta: float = 1e-8
    n_interior: int = 10_000
    n_boundary: int = 1_000
    mode: str = "cordes"  # "cordes" | "plain"
    dtype: str = "float32"  # training arithmetic; metrics stay float64

    def __post_init__(self):
        if self.w_int <= 0 or self.w_bc <= 0:
            raise ValueError("penalty weights must be positive")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.n_interior <= 0 or self.n_boundary <= 0:
            raise ValueError("sample counts must be positive")
        if self.mode not in ("cordes", "plain"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CollocationSystem:
    """Frozen per-point arrays for one training run (or one outer iteration)."""

    points: np.ndarray  # (n, d)
    coeff_rows: np.ndarray  # (R, n): [-c; b rows; paired A entries]
    f: np.ndarray  # (n,)
    scaling: np.ndarray  # (n,) residual multiplier (ones in plain mode)
    bc_points: np.ndarray  # (m, d)
    g: np.ndarray  # (m,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _coeff_rows(spec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack [-c; b; paired A] rows and return them with tr/tr(A^2) data."""
    n, d = points.shape
    pidx = packed_index(d)
    a, b, c = spec.coefficients(points)
    rows = np.zeros((1 + d + pidx.n_pairs, n))
    if c is not None:
        rows[0] = -c
    if b is not None:
        rows[1 : 1 + d] = b.T
    rows[1 + d :] = (pidx.pack(a) * pidx.weights).T
    tr = np.trace(a, axis1=1, axis2=2)
    fro2 = np.sum(a * a, axis=(1, 2))
    return rows, tr / np.maximum(fro2, 1e-300)


def prepare_system(spec, points: np.ndarray, bc_points: np.ndarray,
                   cfg: LossConfig) -> CollocationSystem:
    """Evaluate all coefficient fields once over fixed collocation sets."""
    dtype = np.dtype(cfg.dtype)
    n, d = points.shape
    a, b, c = spec.coefficients(points)
    pidx = packed_index(d)
    rows = np.zeros((1 + d + pidx.n_pairs, n))
    if c is not None:
        rows[0] = -c
    if b is not None:
        rows[1 : 1 + d] = b.T
    rows[1 + d :] = (pidx.pack(a) * pidx.weights).T
    if cfg.mode == "cordes":
        tr = np.trace(a, axis1=1, axis2=2)
        fro2 = np.sum(a * a, axis=(1, 2))
        scaling = tr / (fro2 + cfg.delta)
    else:
        scaling = np.ones(n)
    return CollocationSystem(
        points=points.astype(dtype),
        coeff_rows=rows.astype(dtype),
        f=spec.f_field(points).astype(dtype),
        scaling=scaling.astype(dtype),
        bc_points=bc_points.astype(dtype),
        g=spec.g_field(bc_points).astype(dtype),
    )


def interior_residual_var(tape: T.Tape, arch, theta, system: CollocationSystem) -> T.Var:
    """Tape-recorded per-point PDE residual over the interior set."""
    jet = forward_jets(tape, arch, theta, system.points, order=2)
    r = T.jet_contract(jet.combined, system.coeff_rows)
    return T.add_const(r, -system.f)


def system_losses(tape: T.Tape, arch, theta, system: CollocationSystem):
    """(interior, boundary) scalar loss handles for one epoch."""
    r = interior_residual_var(tape, arch, theta, system)
    interior = T.mean_all(T.square(T.mul_const(r, system.scaling)))
    jet_bc = forward_jets(tape, arch, theta, system.bc_points, order=0)
    boundary = T.mean_all(T.square(T.add_const(jet_bc.value, -system.g)))
    return interior, boundary


# -- spec-level operations (thin wrappers over the prepared-system path) -----


def linear_residual(arch, theta, spec, x, tape: T.Tape | None = None) -> T.Var:
    """Residual A:D2u + b.grad u - c u - f of the network at interior points.

    ``x`` may be a single point or an (n, d) batch; the result is an (n,)
    tape handle.
    """
    tape = tape if tape is not None else T.Tape()
    points = np.atleast_2d(np.asarray(x, dtype=float))
    rows, _ = _coeff_rows(spec, points)
    jet = forward_jets(tape, arch, theta, points, order=2)
    r = T.jet_contract(jet.combined, rows)
    return T.add_const(r, -spec.f_field(points))


def cordes_loss(arch, theta, spec, points, delta: float = 1e-8,
                tape: T.Tape | None = None, mode: str = "cordes") -> T.Var:
    """Mean of |lam(x) (L u - f)|^2 over the point set (lam = 1 in plain mode)."""
    tape = tape if tape is not None else T.Tape()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("empty point set")
    rows, ratio_base = _coeff_rows(spec, points)
    jet = forward_jets(tape, arch, theta, points, order=2)
    r = T.add_const(T.jet_contract(jet.combined, rows), -spec.f_field(points))
    if mode == "cordes":
        a, _, _ = spec.coefficients(points)
        tr = np.trace(a, axis1=1, axis2=2)
        fro2 = np.sum(a * a, axis=(1, 2))
        r = T.mul_const(r, tr / (fro2 + delta))
    return T.mean_all(T.square(r))


def boundary_loss(arch, theta, spec, points, tape: T.Tape | None = None) -> T.Var:
    """Mean squared Dirichlet mismatch of the network trace against g."""
    tape = tape if tape is not None else T.Tape()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jet = forward_jets(tape, arch, theta, points, order=0)
    return T.mean_all(T.square(T.add_const(jet.value, -spec.g_field(points))))


def composite_loss(cfg: LossConfig, interior: T.Var, boundary: T.Var) -> T.Var:
    """w_int * interior + w_bc * boundary on the shared tape."""
    return T.add(T.scale(interior, cfg.w_int), T.scale(boundary, cfg.w_bc))
