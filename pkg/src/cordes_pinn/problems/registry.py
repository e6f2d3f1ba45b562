"""Benchmark problem registry.

Each entry carries coefficient fields, boundary data, and (where known) the
exact solution with hand-derived gradient and Hessian closed forms. Sources f
for the linear benchmarks are generated by applying the operator to those
closed forms, never by numerical differentiation, so the training data cannot
inherit oracle error. The derivative transcriptions themselves are checked
against finite differences in the test suite.

Sign factors like x1*x2/|x1*x2| are defined almost everywhere; samplers jitter
points off the axes, and the convention sign(0) = +1 only ever applies to
measure-zero sets that the pipeline avoids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import RegistryError
from .domains import Ball, Ellipsoid, Rectangle, hypercube, jitter_points

__all__ = [
    "ExactSolution",
    "ProblemSpec",
    "HJBSpec",
    "get_problem",
    "list_problems",
    "source_from_exact",
]


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with analytic first and second derivatives."""

    value: callable  # (n, d) -> (n,)
    grad: callable  # (n, d) -> (n, d)
    hess: callable  # (n, d) -> (n, d, d)


@dataclass
class ProblemSpec:
    """One benchmark PDE in the canonical form A:D2u + b.grad u - c u = f."""

    name: str
    domain: object
    a_field: callable  # (n, d) -> (n, d, d)
    b_field: callable | None
    c_field: callable | None
    f_field: callable  # (n, d) -> (n,)
    g_field: callable  # boundary data
    exact: ExactSolution | None = None
    problem_class: str = "linear"
    singular_sets: tuple[str, ...] = ()
    notes: str = ""

    @property
    def dim(self) -> int:
        return self.domain.dim

    def coefficients(self, points: np.ndarray):
        a = self.a_field(points)
        b = self.b_field(points) if self.b_field is not None else None
        c = self.c_field(points) if self.c_field is not None else None
        return a, b, c

    def operator_apply(self, points, values, grads, hessians) -> np.ndarray:
        """A:H + b.g - c*v at given jets (plain arrays, no tape)."""
        a = self.a_field(points)
        out = np.einsum("nij,nij->n", a, hessians)
        if self.b_field is not None:
            out += np.einsum("ni,ni->n", self.b_field(points), grads)
        if self.c_field is not None:
            out -= self.c_field(points) * values
        return out

    def residual_at_exact(self, points: np.ndarray) -> np.ndarray:
        if self.exact is None:
            raise ValueError(f"{self.name} has no exact solution")
        pts = jitter_points(points, self.singular_sets)
        return self.operator_apply(
            pts, self.exact.value(pts), self.exact.grad(pts), self.exact.hess(pts)
        ) - self.f_field(pts)


@dataclass
class HJBSpec:
    """sup_alpha (L^alpha u - f^alpha) = 0 with a finite control set."""

    name: str
    domain: object
    controls: tuple[int, ...]
    a_fields: tuple  # per control
    b_fields: tuple
    c_fields: tuple
    f_fields: tuple
    g_field: callable
    exact: ExactSolution | None = None
    problem_class: str = field(default="hjb")
    singular_sets: tuple[str, ...] = ()
    notes: str = ""

    @property
    def dim(self) -> int:
        return self.domain.dim

    def branch(self, alpha: int) -> ProblemSpec:
        """The frozen linear problem of one control branch."""
        k = self.controls.index(alpha)
        return ProblemSpec(
            name=f"{self.name}[alpha={alpha}]",
            domain=self.domain,
            a_field=self.a_fields[k],
            b_field=self.b_fields[k],
            c_field=self.c_fields[k],
            f_field=self.f_fields[k],
            g_field=self.g_field,
            exact=self.exact,
            problem_class="linear",
            singular_sets=self.singular_sets,
        )

    def branch_residuals(self, points, values, grads, hessians) -> np.ndarray:
        """L^alpha u - f^alpha for every branch; shape (n_controls, n)."""
        out = []
        for k in range(len(self.controls)):
            a = self.a_fields[k](points)
            r = np.einsum("nij,nij->n", a, hessians)
            if self.b_fields[k] is not None:
                r += np.einsum("ni,ni->n", self.b_fields[k](points), grads)
            if self.c_fields[k] is not None:
                r -= self.c_fields[k](points) * values
            out.append(r - self.f_fields[k](points))
        return np.stack(out)


def source_from_exact(a_field, b_field, c_field, exact: ExactSolution):
    """Source field f = A:D2u + b.grad u - c u evaluated from closed forms."""

    def f(points: np.ndarray) -> np.ndarray:
        out = np.einsum("nij,nij->n", a_field(points), exact.hess(points))
        if b_field is not None:
            out += np.einsum("ni,ni->n", b_field(points), exact.grad(points))
        if c_field is not None:
            out -= c_field(points) * exact.value(points)
        return out

    return f


def _sign_ae(t: np.ndarray) -> np.ndarray:
    # almost-everywhere sign; sampled points are jittered off t == 0
    return np.where(t >= 0.0, 1.0, -1.0)


def _zeros(points):
    return np.zeros(points.shape[0])


def _const(value):
    return lambda points: np.full(points.shape[0], float(value))


def _drift_identity(points):
    return points.copy()


# --------------------------------------------------------------------------
# diffusion-dominated 2D operator shared by the smooth and singular cases
# --------------------------------------------------------------------------


def _a_ex41(points):
    x1, x2 = points[:, 0], points[:, 1]
    n = points.shape[0]
    a = np.empty((n, 2, 2))
    a[:, 0, 0] = np.cbrt(2.0 * x1 - x2) + 4.0 * np.exp(2.0 - x1)
    off = 0.5 * np.sin(10.0 * x1 * x2) - 0.5 * np.sqrt(np.maximum(x1 + 2.0, 0.0))
    a[:, 0, 1] = off
    a[:, 1, 0] = off
    a[:, 1, 1] = np.abs(x2 - 2.0 * x1) ** 0.25 + 3.0
    return a


def _exact_ex41_smooth() -> ExactSolution:
    def value(p):
        return np.abs(p[:, 0]) ** 3 * np.cos(p[:, 1]) / 6.0

    def grad(p):
        x1, x2 = p[:, 0], p[:, 1]
        g = np.empty_like(p)
        g[:, 0] = 0.5 * x1 * np.abs(x1) * np.cos(x2)
        g[:, 1] = -np.abs(x1) ** 3 * np.sin(x2) / 6.0
        return g

    def hess(p):
        x1, x2 = p[:, 0], p[:, 1]
        h = np.empty((p.shape[0], 2, 2))
        h[:, 0, 0] = np.abs(x1) * np.cos(x2)
        h[:, 0, 1] = h[:, 1, 0] = -0.5 * x1 * np.abs(x1) * np.sin(x2)
        h[:, 1, 1] = -np.abs(x1) ** 3 * np.cos(x2) / 6.0
        return h

    return ExactSolution(value, grad, hess)


def _exact_ex41_singular() -> ExactSolution:
    # u = |x1 - x2|^(8/3): weakly singular (third derivatives blow up on x1 = x2)
    def value(p):
        return np.abs(p[:, 0] - p[:, 1]) ** (8.0 / 3.0)

    def grad(p):
        s = p[:, 0] - p[:, 1]
        us = (8.0 / 3.0) * s * np.abs(s) ** (2.0 / 3.0)
        return np.stack([us, -us], axis=1)

    def hess(p):
        s = p[:, 0] - p[:, 1]
        uss = (40.0 / 9.0) * np.abs(s) ** (2.0 / 3.0)
        h = np.empty((p.shape[0], 2, 2))
        h[:, 0, 0] = uss
        h[:, 0, 1] = h[:, 1, 0] = -uss
        h[:, 1, 1] = uss
        return h

    return ExactSolution(value, grad, hess)


def _make_ex41_smooth() -> ProblemSpec:
    exact = _exact_ex41_smooth()
    f = source_from_exact(_a_ex41, None, None, exact)
    return ProblemSpec(
        name="ex4.1-smooth",
        domain=Rectangle((-2.0, -2.0), (2.0, 2.0)),
        a_field=_a_ex41,
        b_field=None,
        c_field=None,
        f_field=f,
        g_field=exact.value,
        exact=exact,
        notes=(
            "stated boundary condition is homogeneous but the exact solution is "
            "nonzero on the square's boundary; g is taken as the exact trace"
        ),
    )


def _make_ex41_singular() -> ProblemSpec:
    exact = _exact_ex41_singular()
    f = source_from_exact(_a_ex41, None, None, exact)
    return ProblemSpec(
        name="ex4.1-singular",
        domain=Ball((0.0, 0.0), 2.0),
        a_field=_a_ex41,
        b_field=None,
        c_field=None,
        f_field=f,
        g_field=exact.value,
        exact=exact,
        singular_sets=("diag12",),
    )


# --------------------------------------------------------------------------
# general second-order operators with drift and reaction
# --------------------------------------------------------------------------


def _a_ex42_continuous(points):
    r = np.linalg.norm(points, axis=1)
    n = points.shape[0]
    a = np.empty((n, 2, 2))
    a[:, 0, 0] = r + 1.0
    a[:, 0, 1] = a[:, 1, 0] = -r
    a[:, 1, 1] = 5.0 * r + 1.0
    return a


def _exact_ex42_continuous() -> ExactSolution:
    two_pi = 2.0 * np.pi

    def parts(p):
        x1, x2 = p[:, 0], p[:, 1]
        s1, c1 = np.sin(two_pi * x1), np.cos(two_pi * x1)
        s2, c2 = np.sin(np.pi * x2), np.cos(np.pi * x2)
        e = np.exp(x1 * np.cos(x2))
        return x1, x2, s1, c1, s2, c2, e

    def value(p):
        _, _, s1, _, s2, _, e = parts(p)
        return s1 * s2 * e

    def grad(p):
        x1, x2, s1, c1, s2, c2, e = parts(p)
        g = np.empty_like(p)
        g[:, 0] = s2 * e * (two_pi * c1 + s1 * np.cos(x2))
        g[:, 1] = s1 * e * (np.pi * c2 - x1 * np.sin(x2) * s2)
        return g

    def hess(p):
        x1, x2, s1, c1, s2, c2, e = parts(p)
        cx2, sx2 = np.cos(x2), np.sin(x2)
        h = np.empty((p.shape[0], 2, 2))
        h[:, 0, 0] = s2 * e * (-two_pi**2 * s1 + 2.0 * two_pi * c1 * cx2 + s1 * cx2**2)
        h01 = e * ((np.pi * c2 - x1 * sx2 * s2) * (two_pi * c1 + s1 * cx2) - s1 * s2 * sx2)
        h[:, 0, 1] = h[:, 1, 0] = h01
        h[:, 1, 1] = s1 * e * (
            -2.0 * np.pi * x1 * c2 * sx2 + x1**2 * s2 * sx2**2 - np.pi**2 * s2 - x1 * s2 * cx2
        )
        return h

    return ExactSolution(value, grad, hess)


def _make_ex42_continuous() -> ProblemSpec:
    exact = _exact_ex42_continuous()
    f = source_from_exact(_a_ex42_continuous, _drift_identity, _const(3.0), exact)
    return ProblemSpec(
        name="ex4.2-continuous",
        domain=Rectangle((-1.0, -1.0), (1.0, 1.0)),
        a_field=_a_ex42_continuous,
        b_field=_drift_identity,
        c_field=_const(3.0),
        f_field=f,
        g_field=_zeros,
        exact=exact,
    )


def _a_checkerboard(points):
    sgn = _sign_ae(points[:, 0] * points[:, 1])
    n = points.shape[0]
    a = np.empty((n, 2, 2))
    a[:, 0, 0] = 2.0
    a[:, 0, 1] = a[:, 1, 0] = sgn
    a[:, 1, 1] = 2.0
    return a


def _exact_ex42_discontinuous() -> ExactSolution:
    def phi(t):
        return t * np.exp(1.0 - np.abs(t)) - t

    def dphi(t):
        return np.exp(1.0 - np.abs(t)) * (1.0 - np.abs(t)) - 1.0

    def d2phi(t):
        return -np.sign(t) * np.exp(1.0 - np.abs(t)) * (2.0 - np.abs(t))

    def value(p):
        return phi(p[:, 0]) * phi(p[:, 1])

    def grad(p):
        g = np.empty_like(p)
        g[:, 0] = dphi(p[:, 0]) * phi(p[:, 1])
        g[:, 1] = phi(p[:, 0]) * dphi(p[:, 1])
        return g

    def hess(p):
        h = np.empty((p.shape[0], 2, 2))
        h[:, 0, 0] = d2phi(p[:, 0]) * phi(p[:, 1])
        h[:, 0, 1] = h[:, 1, 0] = dphi(p[:, 0]) * dphi(p[:, 1])
        h[:, 1, 1] = phi(p[:, 0]) * d2phi(p[:, 1])
        return h

    return ExactSolution(value, grad, hess)


def _make_ex42_discontinuous() -> ProblemSpec:
    exact = _exact_ex42_discontinuous()
    f = source_from_exact(_a_checkerboard, _drift_identity, _const(3.0), exact)
    return ProblemSpec(
        name="ex4.2-discontinuous",
        domain=Rectangle((-1.0, -1.0), (1.0, 1.0)),
        a_field=_a_checkerboard,
        b_field=_drift_identity,
        c_field=_const(3.0),
        f_field=f,
        g_field=_zeros,
        exact=exact,
        singular_sets=("axes",),
    )


# --------------------------------------------------------------------------
# high dimensional cases
# --------------------------------------------------------------------------

_ELL_AXES = (1.5, 1.0, 0.8)


def _a_ellipsoid(points):
    n = points.shape[0]
    a = np.broadcast_to(3.0 * np.eye(3), (n, 3, 3)).copy()
    a += points[:, :, None] * points[:, None, :]
    return a


def _exact_ellipsoid() -> ExactSolution:
    ax2 = np.asarray(_ELL_AXES) ** 2

    def bump(p):
        return 1.0 - np.sum(p**2 / ax2, axis=1)

    def value(p):
        return bump(p) * np.exp(np.prod(p, axis=1))

    def grad(p):
        e = np.exp(np.prod(p, axis=1))
        b = bump(p)
        g = np.empty_like(p)
        for i in range(3):
            others = [k for k in range(3) if k != i]
            p_i = p[:, others[0]] * p[:, others[1]]
            g[:, i] = (-2.0 * p[:, i] / ax2[i] + b * p_i) * e
        return g

    def hess(p):
        e = np.exp(np.prod(p, axis=1))
        b = bump(p)
        h = np.empty((p.shape[0], 3, 3))
        dp = np.empty_like(p)  # partial derivatives of x1*x2*x3
        for i in range(3):
            others = [k for k in range(3) if k != i]
            dp[:, i] = p[:, others[0]] * p[:, others[1]]
        for i in range(3):
            for j in range(i, 3):
                b_i = -2.0 * p[:, i] / ax2[i]
                b_j = -2.0 * p[:, j] / ax2[j]
                b_ij = -2.0 / ax2[i] if i == j else 0.0
                if i == j:
                    p_ij = 0.0
                else:
                    (k,) = [m for m in range(3) if m != i and m != j]
                    p_ij = p[:, k]
                val = (b_ij + b_i * dp[:, j] + b_j * dp[:, i] + b * (p_ij + dp[:, i] * dp[:, j])) * e
                h[:, i, j] = val
                h[:, j, i] = val
        return h

    return ExactSolution(value, grad, hess)


def _make_ex43_ellipsoid() -> ProblemSpec:
    exact = _exact_ellipsoid()
    f = source_from_exact(_a_ellipsoid, None, None, exact)
    return ProblemSpec(
        name="ex4.3-ellipsoid",
        domain=Ellipsoid(_ELL_AXES),
        a_field=_a_ellipsoid,
        b_field=None,
        c_field=None,
        f_field=f,
        g_field=_zeros,
        exact=exact,
    )


def _prod_except_one(factors: np.ndarray) -> np.ndarray:
    """Stable product over all columns but one: prefix * suffix, no division."""
    n, d = factors.shape
    pref = np.ones((n, d + 1))
    suf = np.ones((n, d + 1))
    for k in range(d):
        pref[:, k + 1] = pref[:, k] * factors[:, k]
    for k in range(d - 1, -1, -1):
        suf[:, k] = suf[:, k + 1] * factors[:, k]
    return pref[:, :d] * suf[:, 1:]


def _a_sign_offdiag(diag: float, d: int):
    def a_field(points):
        s = _sign_ae(points)
        a = s[:, :, None] * s[:, None, :]
        idx = np.arange(d)
        a[:, idx, idx] = diag
        return a

    return a_field


def _exact_trig_product(d: int) -> ExactSolution:
    """u = prod cos(pi/2 x_i) + prod sin(pi x_i) on (-1, 1)^d."""
    ac, as_ = 0.5 * np.pi, np.pi

    def trig(p):
        return np.cos(ac * p), np.sin(ac * p), np.cos(as_ * p), np.sin(as_ * p)

    def value(p):
        cc, _, _, ss = trig(p)
        return np.prod(cc, axis=1) + np.prod(ss, axis=1)

    def grad(p):
        cc, cs, sc, ss = trig(p)
        rest_c = _prod_except_one(cc)
        rest_s = _prod_except_one(ss)
        return -ac * cs * rest_c + as_ * sc * rest_s

    def hess(p):
        cc, cs, sc, ss = trig(p)
        n = p.shape[0]
        h = np.empty((n, d, d))
        rest_c = _prod_except_one(cc)
        rest_s = _prod_except_one(ss)
        for i in range(d):
            h[:, i, i] = -(ac**2) * cc[:, i] * rest_c[:, i] - as_**2 * ss[:, i] * rest_s[:, i]
            for j in range(i + 1, d):
                idx = [k for k in range(d) if k != i and k != j]
                pc = np.prod(cc[:, idx], axis=1)
                ps = np.prod(ss[:, idx], axis=1)
                val = ac**2 * cs[:, i] * cs[:, j] * pc + as_**2 * sc[:, i] * sc[:, j] * ps
                h[:, i, j] = val
                h[:, j, i] = val
        return h

    return ExactSolution(value, grad, hess)


def _make_high_dim(d: int) -> ProblemSpec:
    exact = _exact_trig_product(d)
    a_field = _a_sign_offdiag(float(d), d)
    f = source_from_exact(a_field, None, None, exact)
    return ProblemSpec(
        name=f"ex4.3-{d}d",
        domain=hypercube(d, -1.0, 1.0),
        a_field=a_field,
        b_field=None,
        c_field=None,
        f_field=f,
        g_field=_zeros,
        exact=exact,
        singular_sets=("axes",),
    )


# --------------------------------------------------------------------------
# constant-source cases without a known solution
# --------------------------------------------------------------------------


def _a_ex44_continuous(points):
    r = np.linalg.norm(points, axis=1)
    n = points.shape[0]
    a = np.empty((n, 2, 2))
    a[:, 0, 0] = r + 2.0
    a[:, 0, 1] = a[:, 1, 0] = -r
    a[:, 1, 1] = 3.0 * r + 2.0
    return a


def _make_ex44_continuous() -> ProblemSpec:
    return ProblemSpec(
        name="ex4.4-continuous",
        domain=Rectangle((-0.5, -0.5), (0.5, 0.5)),
        a_field=_a_ex44_continuous,
        b_field=_drift_identity,
        c_field=_const(4.0),
        f_field=_const(2.0),
        g_field=_zeros,
        exact=None,
    )


def _make_ex44_discontinuous() -> ProblemSpec:
    return ProblemSpec(
        name="ex4.4-discontinuous",
        domain=Rectangle((-1.0, -1.0), (1.0, 1.0)),
        a_field=_a_checkerboard,
        b_field=_drift_identity,
        c_field=_const(3.0),
        f_field=_const(2.0),
        g_field=_zeros,
        exact=None,
        singular_sets=("axes",),
    )


# --------------------------------------------------------------------------
# Hamilton-Jacobi-Bellman benchmark
# --------------------------------------------------------------------------


def _hjb_a_field(base: np.ndarray, bump: np.ndarray):
    base = np.asarray(base)
    bump = np.asarray(bump)

    def a_field(points):
        sgn = _sign_ae(points[:, 0]) * _sign_ae(points[:, 1])
        return base[None, :, :] + sgn[:, None, None] * bump[None, :, :]

    return a_field


def _exact_sin_sin() -> ExactSolution:
    def value(p):
        return np.sin(p[:, 0]) * np.sin(p[:, 1])

    def grad(p):
        g = np.empty_like(p)
        g[:, 0] = np.cos(p[:, 0]) * np.sin(p[:, 1])
        g[:, 1] = np.sin(p[:, 0]) * np.cos(p[:, 1])
        return g

    def hess(p):
        u = value(p)
        h = np.empty((p.shape[0], 2, 2))
        h[:, 0, 0] = -u
        h[:, 0, 1] = h[:, 1, 0] = np.cos(p[:, 0]) * np.cos(p[:, 1])
        h[:, 1, 1] = -u
        return h

    return ExactSolution(value, grad, hess)


def _make_ex45_hjb() -> HJBSpec:
    exact = _exact_sin_sin()
    a1 = _hjb_a_field([[2.0, 0.5], [0.5, 1.5]], [[1.0, 0.5], [0.5, 0.5]])
    a2 = _hjb_a_field([[1.5, 0.5], [0.5, 2.0]], [[0.5, 0.5], [0.5, 1.0]])

    def b_field(points):
        b = np.zeros_like(points)
        b[:, 0] = 1.0
        return b

    c_field = _const(1.0)
    # both branch sources fit the exact solution, so the pointwise sup vanishes
    f1 = source_from_exact(a1, b_field, c_field, exact)
    f2 = source_from_exact(a2, b_field, c_field, exact)
    return HJBSpec(
        name="ex4.5-hjb",
        domain=Rectangle((-np.pi, -np.pi), (np.pi, np.pi)),
        controls=(1, 2),
        a_fields=(a1, a2),
        b_fields=(b_field, b_field),
        c_fields=(c_field, c_field),
        f_fields=(f1, f2),
        g_field=_zeros,
        exact=exact,
        singular_sets=("axes",),
    )


# --------------------------------------------------------------------------
# Monge-Ampere benchmark
# --------------------------------------------------------------------------


def _exact_ma_radial() -> ExactSolution:
    def value(p):
        return np.exp(0.5 * np.sum(p**2, axis=1))

    def grad(p):
        return p * value(p)[:, None]

    def hess(p):
        u = value(p)
        h = p[:, :, None] * p[:, None, :] * u[:, None, None]
        idx = np.arange(p.shape[1])
        h[:, idx, idx] += u[:, None]
        return h

    return ExactSolution(value, grad, hess)


def _make_ex46_ma() -> ProblemSpec:
    exact = _exact_ma_radial()

    def f_field(points):
        r2 = np.sum(points**2, axis=1)
        return (1.0 + r2) * np.exp(r2)

    return ProblemSpec(
        name="ex4.6-ma",
        domain=Rectangle((0.0, 0.0), (1.0, 1.0)),
        a_field=lambda pts: np.broadcast_to(np.eye(2), (pts.shape[0], 2, 2)).copy(),
        b_field=None,
        c_field=None,
        f_field=f_field,
        g_field=exact.value,
        exact=exact,
        problem_class="monge_ampere",
        notes="det(D2 u) = f with Dirichlet data from the convex radial solution",
    )


def _make_ex51_transport():
    from ..transport import example51_fields

    return example51_fields()


_REGISTRY = {
    "ex4.1-smooth": _make_ex41_smooth,
    "ex4.1-singular": _make_ex41_singular,
    "ex4.2-continuous": _make_ex42_continuous,
    "ex4.2-discontinuous": _make_ex42_discontinuous,
    "ex4.3-ellipsoid": _make_ex43_ellipsoid,
    "ex4.3-5d": lambda: _make_high_dim(5),
    "ex4.3-20d": lambda: _make_high_dim(20),
    "ex4.4-continuous": _make_ex44_continuous,
    "ex4.4-discontinuous": _make_ex44_discontinuous,
    "ex4.5-hjb": _make_ex45_hjb,
    "ex4.6-ma": _make_ex46_ma,
    "ex5.1-ot": _make_ex51_transport,
}


def list_problems() -> list[str]:
    return sorted(_REGISTRY)


def get_problem(name: str):
    """Look up a benchmark by name; unknown names list the registry."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise RegistryError(name, list_problems()) from None
    return factory()
