"""Loss landscape probe along two random filter-normalized directions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import NetworkArch, param_layout

__all__ = ["LandscapeProbe", "landscape_probe", "filter_normalized_direction"]


@dataclass
class LandscapeProbe:
    directions: np.ndarray  # (2, n_params)
    offsets: np.ndarray  # (grid_n,)
    surface: np.ndarray  # (grid_n, grid_n) loss values

    def to_records(self):
        rows = []
        for i, a in enumerate(self.offsets):
            for j, b in enumerate(self.offsets):
                rows.append({"a": float(a), "b": float(b), "loss": float(self.surface[i, j])})
        return rows


def filter_normalized_direction(arch: NetworkArch, params: np.ndarray,
                                rng: np.random.Generator) -> np.ndarray:
    """Gaussian direction rescaled so each layer matches the parameter layer norm."""
    layout = param_layout(arch)
    direction = rng.standard_normal(params.size)
    for w_slice, b_slice, _ in layout.slices:
        sl = slice(w_slice.start, b_slice.stop)  # weights and bias of one layer
        norm_d = np.linalg.norm(direction[sl])
        norm_p = np.linalg.norm(params[sl])
        direction[sl] *= norm_p / norm_d if norm_d > 0 else 0.0
    return direction


def landscape_probe(arch: NetworkArch, params: np.ndarray, loss_fn,
                    half_width: float = 1.0, grid_n: int = 21,
                    seed: int = 0) -> LandscapeProbe:
    """Evaluate loss_fn(params + a*d1 + b*d2) over a square offset grid.

    Directions are filter normalized per layer, so probes of differently
    scaled networks are comparable. An odd ``grid_n`` puts the unperturbed
    parameters at the center node.
    """
    if not np.all(np.isfinite(params)):
        raise ValueError("parameters must be finite")
    rng = np.random.default_rng(seed)
    d1 = filter_normalized_direction(arch, params, rng)
    d2 = filter_normalized_direction(arch, params, rng)
    offsets = np.linspace(-half_width, half_width, grid_n)
    surface = np.empty((grid_n, grid_n))
    for i, a in enumerate(offsets):
        for j, b in enumerate(offsets):
            if a == 0.0 and b == 0.0:
                surface[i, j] = float(loss_fn(params))
            else:
                surface[i, j] = float(loss_fn(params + a * d1 + b * d2))
    return LandscapeProbe(directions=np.stack([d1, d2]), offsets=offsets, surface=surface)
