"""Benchmark geometries and collocation samplers.

All sampling is driven by explicit integer seeds through numpy Generators, so
fixed (domain, n, seed) triples reproduce point sets bitwise. Coefficient
fields that are only defined almost everywhere (sign factors on the axes, the
x1 = x2 line) get their sample points nudged off the singular sets by a 1e-12
jitter; random draws land there with probability zero but tensor grids do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import GeometryError

__all__ = [
    "Rectangle",
    "Ball",
    "Ellipsoid",
    "hypercube",
    "jitter_points",
    "sample_interior",
    "sample_boundary",
    "eval_grid",
]

_JITTER = 1e-12
_GRID_CLOUD_SEED = 202406  # fixed: eval_grid takes no seed but must be deterministic


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box with per-axis bounds; covers squares and hypercubes."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise GeometryError("lo and hi must have equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise GeometryError("rectangle extents must be positive")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points > lo) & (points < hi), axis=1)

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0:
            raise GeometryError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.sum((points - np.asarray(self.center)) ** 2, axis=1) < self.radius**2

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Ellipsoid:
    """3D ellipsoid (x1/a)^2 + (x2/b)^2 + (x3/c)^2 < 1 centered at the origin."""

    semi_axes: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in self.semi_axes))
        if len(self.semi_axes) != 3 or any(v <= 0 for v in self.semi_axes):
            raise GeometryError("ellipsoid needs three positive semi-axes")

    @property
    def dim(self) -> int:
        return 3

    def contains(self, points: np.ndarray) -> np.ndarray:
        ax = np.asarray(self.semi_axes)
        return np.sum((points / ax) ** 2, axis=1) < 1.0

    def bbox(self):
        ax = np.asarray(self.semi_axes)
        return -ax, ax


def hypercube(d: int, lo: float, hi: float) -> Rectangle:
    return Rectangle((lo,) * d, (hi,) * d)


def jitter_points(points: np.ndarray, singular_sets: tuple[str, ...],
                  eps: float = _JITTER) -> np.ndarray:
    """Nudge points off declared measure-zero singular sets.

    ``"axes"`` shifts coordinates that are exactly zero; ``"diag12"`` shifts
    x1 off the x1 = x2 line.
    """
    if not singular_sets:
        return points
    points = np.array(points, copy=True)
    if "axes" in singular_sets:
        points[points == 0.0] = eps
    if "diag12" in singular_sets:
        mask = points[:, 0] == points[:, 1]
        points[mask, 0] += eps
    return points


def sample_interior(domain, n: int, seed: int,
                    singular_sets: tuple[str, ...] = ()) -> np.ndarray:
    """n i.i.d. uniform interior points; rejection sampling inside curved domains."""
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox()
    d = domain.dim
    if isinstance(domain, Rectangle):
        pts = rng.uniform(lo, hi, size=(n, d))
        return jitter_points(pts, singular_sets)
    out = np.empty((0, d))
    attempts = 0
    while out.shape[0] < n:
        draw = rng.uniform(lo, hi, size=(2 * n, d))
        keep = draw[domain.contains(draw)]
        attempts += 2 * n
        if attempts >= 200 * n and out.shape[0] + keep.shape[0] < max(1, attempts // 100):
            raise GeometryError("rejection sampling acceptance below 1%")
        out = np.vstack([out, keep])
    return jitter_points(out[:n], singular_sets)


def sample_boundary(domain, n: int, seed: int) -> np.ndarray:
    """n boundary points: faces weighted by measure (boxes), uniform angle
    (balls), spherical parameterization scaled to the surface (ellipsoids,
    not uniform in surface measure)."""
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    d = domain.dim
    if isinstance(domain, Rectangle):
        lo = np.asarray(domain.lo)
        hi = np.asarray(domain.hi)
        extents = hi - lo
        # face (axis, side) measure = product of the other extents
        face_measure = np.repeat([np.prod(extents) / extents[k] for k in range(d)], 2)
        face_prob = face_measure / face_measure.sum()
        faces = rng.choice(2 * d, size=n, p=face_prob)
        pts = rng.uniform(lo, hi, size=(n, d))
        axis = faces // 2
        side = faces % 2
        pts[np.arange(n), axis] = np.where(side == 0, lo[axis], hi[axis])
        return pts
    if isinstance(domain, Ball):
        if d == 2:
            theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
            dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        else:
            raw = rng.standard_normal((n, d))
            dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return np.asarray(domain.center) + domain.radius * dirs
    if isinstance(domain, Ellipsoid):
        raw = rng.standard_normal((n, 3))
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return dirs * np.asarray(domain.semi_axes)
    raise GeometryError(f"unsupported domain type {type(domain).__name__}")


def eval_grid(domain, resolution: int) -> np.ndarray:
    """Evaluation point set: tensor grids (boundary nodes included) in d <= 3,
    a deterministic Monte Carlo cloud of resolution^2 points above that, and
    bounding-box grids filtered to the closure for curved domains."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    d = domain.dim
    if isinstance(domain, Rectangle) and d > 3:
        return sample_interior(domain, resolution**2, _GRID_CLOUD_SEED)
    lo, hi = domain.bbox()
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(domain, Rectangle):
        return pts
    ax = None
    if isinstance(domain, Ball):
        inside = np.sum((pts - np.asarray(domain.center)) ** 2, axis=1) <= domain.radius**2
    else:
        ax = np.asarray(domain.semi_axes)
        inside = np.sum((pts / ax) ** 2, axis=1) <= 1.0
    return pts[inside]
