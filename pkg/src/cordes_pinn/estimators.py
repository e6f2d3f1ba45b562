"""Scikit-learn style estimator wrappers over the solver layer.

The solvers are fit/predict shaped: fitting trains a network against a named
benchmark (or a ProblemSpec), predicting evaluates the learned field at query
points. Wrapping them as estimators gives get_params/set_params/clone for
free, so runs compose with the usual model-selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import NetworkArch, eval_values
from .nonlinear import OuterConfig, solve_nonlinear
from .problems import eval_grid, get_problem
from .training import LossConfig, train
from .training.loop import errors_l2_linf
from .transport import solve_transport, transport_map

__all__ = ["CordesPinnSolver", "DualLoopSolver", "TransportMapEstimator", "check_points"]


def check_points(X, dim: int) -> np.ndarray:
    """Validate query points: 2D, right width, finite, float64."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points of shape (n, {dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("query points must be finite")
    return X


def _resolve(problem):
    return get_problem(problem) if isinstance(problem, str) else problem


class CordesPinnSolver(BaseEstimator):
    """Collocation solver for linear non-divergence benchmarks.

    fit() samples collocation sets, trains with Adam on the (optionally
    Cordes-preconditioned) residual, and stores the trained parameters in
    ``params_`` with the training history in ``history_``.
    """

    def __init__(self, problem="ex4.1-smooth", hidden=(32, 32), mode="cordes",
                 epochs=20_000, seed=0, w_int=1.0, w_bc=100.0, delta=1e-8,
                 n_interior=10_000, n_boundary=1_000, eval_every=500, lr=3e-4,
                 grid_resolution=200, dtype="float32"):
        self.problem = problem
        self.hidden = hidden
        self.mode = mode
        self.epochs = epochs
        self.seed = seed
        self.w_int = w_int
        self.w_bc = w_bc
        self.delta = delta
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.eval_every = eval_every
        self.lr = lr
        self.grid_resolution = grid_resolution
        self.dtype = dtype

    def _loss_config(self) -> LossConfig:
        return LossConfig(
            w_int=self.w_int, w_bc=self.w_bc, delta=self.delta,
            n_interior=self.n_interior, n_boundary=self.n_boundary,
            mode=self.mode, dtype=self.dtype,
        )

    def fit(self, X=None, y=None):
        spec = _resolve(self.problem)
        arch = NetworkArch(spec.dim, tuple(self.hidden))
        result = train(
            spec, arch, self._loss_config(), self.epochs, self.seed,
            eval_every=self.eval_every, lr=self.lr,
            grid_resolution=self.grid_resolution,
        )
        self.spec_ = spec
        self.arch_ = arch
        self.params_ = result.params
        self.history_ = result.history
        self.result_ = result
        self.n_features_in_ = spec.dim
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_points(X, self.n_features_in_)
        return eval_values(self.arch_, self.params_, X)

    def score(self, X=None, y=None) -> float:
        """Negative l2 error against the exact solution (higher is better)."""
        check_is_fitted(self, "params_")
        if self.spec_.exact is None:
            raise ValueError(f"{self.spec_.name} has no exact solution to score against")
        grid = (
            check_points(X, self.n_features_in_)
            if X is not None
            else eval_grid(self.spec_.domain, self.grid_resolution)
        )
        l2, _ = errors_l2_linf(
            eval_values(self.arch_, self.params_, grid),
            self.spec_.exact.value(grid),
            grid,
        )
        return -l2


class DualLoopSolver(BaseEstimator):
    """Outer Newton linearization + inner Cordes training for HJB and MA."""

    def __init__(self, problem="ex4.6-ma", hidden=(32, 32), total_epochs=40_000,
                 outer_iterations=4, warmup_fraction=0.2, seed=0, w_int=1.0,
                 w_bc=100.0, delta=1e-8, n_interior=10_000, n_boundary=1_000,
                 eval_every=500, lr=3e-4, grid_resolution=200, eig_floor=1e-6,
                 dtype="float32"):
        self.problem = problem
        self.hidden = hidden
        self.total_epochs = total_epochs
        self.outer_iterations = outer_iterations
        self.warmup_fraction = warmup_fraction
        self.seed = seed
        self.w_int = w_int
        self.w_bc = w_bc
        self.delta = delta
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.eval_every = eval_every
        self.lr = lr
        self.grid_resolution = grid_resolution
        self.eig_floor = eig_floor
        self.dtype = dtype

    def fit(self, X=None, y=None):
        spec = _resolve(self.problem)
        arch = NetworkArch(spec.dim, tuple(self.hidden))
        outer = OuterConfig.from_total(
            self.total_epochs, outer_iterations=self.outer_iterations,
            warmup_fraction=self.warmup_fraction, eig_floor=self.eig_floor,
        )
        cfg = LossConfig(
            w_int=self.w_int, w_bc=self.w_bc, delta=self.delta,
            n_interior=self.n_interior, n_boundary=self.n_boundary,
            mode="cordes", dtype=self.dtype,
        )
        result = solve_nonlinear(
            spec, arch, outer, cfg, self.seed, eval_every=self.eval_every,
            lr=self.lr, grid_resolution=self.grid_resolution,
        )
        self.spec_ = spec
        self.arch_ = arch
        self.params_ = result.params
        self.history_ = result.history
        self.result_ = result
        self.n_features_in_ = spec.dim
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_points(X, self.n_features_in_)
        return eval_values(self.arch_, self.params_, X)


class TransportMapEstimator(BaseEstimator, TransformerMixin):
    """Brenier-map estimator: fit learns the potential, transform maps points."""

    def __init__(self, problem="ex5.1-ot", hidden=(64, 64), total_epochs=40_000,
                 outer_iterations=4, warmup_fraction=0.25, seed=0, w_int=1.0,
                 w_bc=100.0, delta=1e-8, n_interior=10_000, n_boundary=1_000,
                 eval_every=500, lr=3e-4, grid_resolution=200, eig_floor=1e-6,
                 dtype="float32"):
        self.problem = problem
        self.hidden = hidden
        self.total_epochs = total_epochs
        self.outer_iterations = outer_iterations
        self.warmup_fraction = warmup_fraction
        self.seed = seed
        self.w_int = w_int
        self.w_bc = w_bc
        self.delta = delta
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.eval_every = eval_every
        self.lr = lr
        self.grid_resolution = grid_resolution
        self.eig_floor = eig_floor
        self.dtype = dtype

    def fit(self, X=None, y=None):
        prob = _resolve(self.problem)
        arch = NetworkArch(prob.dim, tuple(self.hidden))
        outer = OuterConfig.from_total(
            self.total_epochs, outer_iterations=self.outer_iterations,
            warmup_fraction=self.warmup_fraction, eig_floor=self.eig_floor,
        )
        cfg = LossConfig(
            w_int=self.w_int, w_bc=self.w_bc, delta=self.delta,
            n_interior=self.n_interior, n_boundary=self.n_boundary,
            mode="cordes", dtype=self.dtype,
        )
        state, result = solve_transport(
            prob, arch, outer, cfg, self.seed, eval_every=self.eval_every,
            lr=self.lr, grid_resolution=self.grid_resolution,
        )
        self.problem_ = prob
        self.state_ = state
        self.result_ = result
        self.history_ = result.history
        self.n_features_in_ = prob.dim
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "state_")
        X = check_points(X, self.n_features_in_)
        return transport_map(self.state_, X)
