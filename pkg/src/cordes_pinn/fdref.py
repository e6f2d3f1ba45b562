"""Independent finite-difference reference solver for 2D linear benchmarks.

Second-order centered 9-point discretization of A:D2u + b.grad u - c u = f on
a rectangle with Dirichlet data, assembled sparse and solved directly. Used to
cross-check trained fields on the constant-source problems whose exact
solution is unknown. Coefficients are evaluated at nodes through the
almost-everywhere jitter rule, so checkerboard sign factors are well defined
on grid lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError
from .problems.domains import Rectangle, jitter_points

__all__ = ["FDSolution", "fd_reference_solve"]


@dataclass
class FDSolution:
    xs: np.ndarray  # (nx + 1,)
    ys: np.ndarray  # (ny + 1,)
    values: np.ndarray  # (nx + 1, ny + 1)

    def points(self) -> np.ndarray:
        mx, my = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([mx.ravel(), my.ravel()], axis=1)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


def fd_reference_solve(spec, n: int) -> FDSolution:
    """Solve the linear benchmark on an (n+1)^2 tensor grid.

    Cross derivatives use the standard 4-point corner stencil.
    """
    if spec.problem_class != "linear":
        raise ValueError("fd_reference_solve handles linear problems only")
    if not isinstance(spec.domain, Rectangle) or spec.domain.dim != 2:
        raise ValueError("fd_reference_solve requires a 2D rectangle domain")
    if n < 2:
        raise ValueError("grid size n must be >= 2")

    lo, hi = spec.domain.bbox()
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    mx, my = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([mx.ravel(), my.ravel()], axis=1)
    n_nodes = nodes.shape[0]
    idx = np.arange(n_nodes).reshape(n + 1, n + 1)

    interior = np.zeros((n + 1, n + 1), dtype=bool)
    interior[1:-1, 1:-1] = True
    interior_flat = interior.ravel()
    coeff_pts = jitter_points(nodes, spec.singular_sets if spec.singular_sets else ("axes",))
    a, b, c = spec.coefficients(coeff_pts)
    f = spec.f_field(coeff_pts)

    rows, cols, vals = [], [], []
    rhs = np.zeros(n_nodes)

    def add(r, cc, v):
        rows.append(r)
        cols.append(cc)
        vals.append(v)

    it = np.argwhere(interior)
    for i, j in it:
        r = idx[i, j]
        a11 = a[r, 0, 0]
        a12 = a[r, 0, 1]
        a22 = a[r, 1, 1]
        b1 = b[r, 0] if b is not None else 0.0
        b2 = b[r, 1] if b is not None else 0.0
        cr = c[r] if c is not None else 0.0
        add(r, r, -2.0 * a11 / hx**2 - 2.0 * a22 / hy**2 - cr)
        add(r, idx[i + 1, j], a11 / hx**2 + b1 / (2.0 * hx))
        add(r, idx[i - 1, j], a11 / hx**2 - b1 / (2.0 * hx))
        add(r, idx[i, j + 1], a22 / hy**2 + b2 / (2.0 * hy))
        add(r, idx[i, j - 1], a22 / hy**2 - b2 / (2.0 * hy))
        cross = 2.0 * a12 / (4.0 * hx * hy)
        add(r, idx[i + 1, j + 1], cross)
        add(r, idx[i - 1, j - 1], cross)
        add(r, idx[i + 1, j - 1], -cross)
        add(r, idx[i - 1, j + 1], -cross)
        rhs[r] = f[r]

    boundary_flat = ~interior_flat
    g = spec.g_field(nodes[boundary_flat])
    bidx = np.flatnonzero(boundary_flat)
    for r, gv in zip(bidx, g):
        add(r, r, 1.0)
        rhs[r] = gv

    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))
    try:
        solution = spla.spsolve(matrix, rhs)
    except RuntimeError as err:  # umfpack/superlu singular factorization
        raise SingularSystemError(f"FD system is singular at n={n}: {err}") from err
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError(f"FD solve produced non-finite values at n={n}")
    return FDSolution(xs=xs, ys=ys, values=solution.reshape(n + 1, n + 1))
