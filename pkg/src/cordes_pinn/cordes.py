"""Cordes condition verification, optimal multipliers, and contraction bounds.

The preconditioner scales the second-order operator by lam(x) = tr(A)/tr(A^2),
the minimizer of ||I - lam*A||_F. For coefficient matrices whose trace ratio
(tr A)^2 / tr(A^2) stays above d-1, the scaled operator contracts toward the
Laplacian, which is what makes the residual loss well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import DegenerateCoefficientError

__all__ = [
    "cordes_ratio",
    "check_cordes",
    "multiplier",
    "contraction_gap",
    "CordesReport",
]

_SYM_TOL = 1e-10


def _as_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=_SYM_TOL * max(1.0, float(np.abs(a).max()))):
        raise ValueError("coefficient matrix must be symmetric")
    return a


def cordes_ratio(a: np.ndarray) -> float:
    """(tr A)^2 / tr(A^2); equals (tr A)^2 / ||A||_F^2 for symmetric A."""
    a = _as_symmetric(a)
    denom = float(np.sum(a * a))
    if denom == 0.0:
        raise DegenerateCoefficientError("zero coefficient matrix has no Cordes ratio")
    tr = float(np.trace(a))
    return tr * tr / denom


def multiplier(a: np.ndarray, delta: float = 0.0) -> float:
    """Optimal point-wise scaling tr(A) / (tr(A^2) + delta)."""
    a = _as_symmetric(a)
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    return float(np.trace(a)) / (float(np.sum(a * a)) + delta)


def contraction_gap(a: np.ndarray) -> tuple[float, float]:
    """Achieved ||I - lam*A||_F^2 with the optimal lam, and the 1 - eps bound.

    The minimized norm equals n - (tr A)^2/tr(A^2) identically, so with
    eps = ratio - (n - 1) the two returned numbers agree to rounding; random
    matrices exercise that identity rather than an inequality with slack.
    """
    a = _as_symmetric(a)
    n = a.shape[0]
    ratio = cordes_ratio(a)
    lam = multiplier(a, 0.0)
    diff = np.eye(n) - lam * a
    achieved = float(np.sum(diff * diff))
    bound = 1.0 - (ratio - (n - 1))
    return achieved, bound


@dataclass
class CordesReport:
    """Sampled verification of the Cordes condition for one coefficient field."""

    case: str  # "principal_only" | "with_lower_order"
    epsilon: float
    worst_ratio: float
    worst_point: tuple[float, ...]
    multiplier_min: float
    multiplier_max: float
    multiplier_mean: float
    aux_lambda: float | None
    n_samples: int
    dimension: int

    @property
    def satisfied(self) -> bool:
        return self.epsilon > 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["satisfied"] = self.satisfied
        return out


def check_cordes(coefficients, points: np.ndarray, aux_lambda: float | None = None,
                 delta: float = 0.0) -> CordesReport:
    """Estimate the Cordes epsilon of a coefficient field over sample points.

    ``coefficients`` maps a batch of points (n, d) to (A, b, c) with A of
    shape (n, d, d), b of shape (n, d) or None, c of shape (n,) or None.
    With lower-order terms present and ``aux_lambda`` supplied, the
    generalized ratio (trace + c/lam)^2 / (||A||_F^2 + |b|^2/(2 lam) + c^2/lam^2)
    is tested against d + eps; otherwise the principal-part ratio is tested
    against d - 1 + eps. Epsilon <= 0 flags a violation; no exception is
    raised so callers can report rather than abort.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    if n == 0:
        raise ValueError("empty sample set")
    a, b, c = coefficients(points)
    a = np.asarray(a, dtype=float)
    tr = np.trace(a, axis1=1, axis2=2)
    fro2 = np.sum(a * a, axis=(1, 2))
    if np.any(fro2 == 0.0):
        raise DegenerateCoefficientError("zero coefficient matrix in sample set")

    has_lower = (b is not None and np.any(np.asarray(b) != 0.0)) or (
        c is not None and np.any(np.asarray(c) != 0.0)
    )
    if has_lower and aux_lambda is not None:
        if aux_lambda <= 0.0:
            raise ValueError("aux_lambda must be positive")
        bsq = np.sum(np.asarray(b, dtype=float) ** 2, axis=1) if b is not None else 0.0
        cv = np.asarray(c, dtype=float) if c is not None else np.zeros(n)
        num = (tr + cv / aux_lambda) ** 2
        den = fro2 + bsq / (2.0 * aux_lambda) + cv**2 / aux_lambda**2
        ratios = num / den
        eps = float(np.min(ratios - d))
        case = "with_lower_order"
        used_lambda = aux_lambda
    else:
        ratios = tr * tr / fro2
        eps = float(np.min(ratios - (d - 1)))
        case = "principal_only"
        used_lambda = None

    worst = int(np.argmin(ratios))
    lam = tr / (fro2 + delta)
    return CordesReport(
        case=case,
        epsilon=min(eps, 1.0),
        worst_ratio=float(ratios[worst]),
        worst_point=tuple(float(v) for v in points[worst]),
        multiplier_min=float(lam.min()),
        multiplier_max=float(lam.max()),
        multiplier_mean=float(lam.mean()),
        aux_lambda=used_lambda,
        n_samples=n,
        dimension=d,
    )
