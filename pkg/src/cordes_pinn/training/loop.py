"""Full-batch Adam training loop with optimization-dynamics diagnostics.

Collocation sets are sampled once per run; every epoch rebuilds the tape over
the same points, so runs are bitwise reproducible for a fixed seed on one
machine (wall-clock columns excepted). History rows are recorded at epoch 0,
every ``eval_every`` epochs, and at the final epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ..autodiff import NetworkArch, eval_values, init_network, param_layout
from ..autodiff import tape as T
from ..exceptions import TrainingDivergenceError
from ..problems.domains import eval_grid, sample_boundary, sample_interior
from .adam import adam_init, adam_step
from .losses import CollocationSystem, LossConfig, prepare_system, system_losses

__all__ = [
    "HistoryRow",
    "TrainResult",
    "train",
    "run_adam_loop",
    "errors_l2_linf",
    "sigma_proxy",
    "HISTORY_COLUMNS",
]

HISTORY_COLUMNS = (
    "epoch",
    "total_loss",
    "int_loss",
    "bc_loss",
    "grad_norm",
    "sigma_proxy",
    "l2",
    "linf",
    "ms_per_iter",
)


@dataclass
class HistoryRow:
    epoch: int
    total_loss: float
    int_loss: float
    bc_loss: float
    grad_norm: float
    sigma_proxy: float | None
    l2: float | None
    linf: float | None
    ms_per_iter: float | None
    phase: str | None = None
    outer_k: int | None = None

    def as_record(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: np.ndarray
    history: list[HistoryRow]
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def final(self) -> HistoryRow:
        return self.history[-1]

    def column(self, name: str) -> list:
        return [getattr(row, name) for row in self.history]


def errors_l2_linf(predicted, exact, grid: np.ndarray) -> tuple[float, float]:
    """Root-mean-square and max absolute difference over evaluation points.

    ``predicted`` and ``exact`` may be callables on (n, d) points or arrays.
    """
    grid = np.asarray(grid)
    if grid.size == 0:
        raise ValueError("empty evaluation grid")
    pv = np.asarray(predicted(grid) if callable(predicted) else predicted, dtype=float)
    ev = np.asarray(exact(grid) if callable(exact) else exact, dtype=float)
    diff = pv - ev
    return float(np.sqrt(np.mean(diff**2))), float(np.max(np.abs(diff)))


def sigma_proxy(grad_t: np.ndarray, grad_prev: np.ndarray,
                theta_t: np.ndarray, theta_prev: np.ndarray) -> float | None:
    """Local Lipschitz estimate ||dgrad|| / ||dtheta|| along the iterate path.

    Returns None (recorded as missing) when the parameters did not move.
    """
    denom = float(np.linalg.norm(theta_t - theta_prev))
    if denom == 0.0:
        return None
    return float(np.linalg.norm(grad_t - grad_prev)) / denom


def run_adam_loop(arch: NetworkArch, theta0: np.ndarray, loss_builder, epochs: int,
                  eval_every: int, metrics_fn=None, lr: float = 3e-4,
                  pool: T.BufferPool | None = None, phase: str | None = None,
                  outer_k: int | None = None, epoch_offset: int = 0,
                  adam_state=None, history: list[HistoryRow] | None = None):
    """Drive Adam over a tape-rebuilding loss builder.

    ``loss_builder(tape, theta) -> (total, interior, boundary)`` tape handles.
    Returns (theta, adam_state, history); history rows carry the phase label
    and outer iteration index when provided (dual-loop drivers use both).
    """
    pool = pool if pool is not None else T.BufferPool()
    theta = np.array(theta0, dtype=np.float64)
    state = adam_state if adam_state is not None else adam_init(theta.size, lr=lr)
    history = history if history is not None else []
    prev_grad = None
    prev_theta = None
    last_record_time = time.perf_counter()
    last_record_epoch = 0

    def record(epoch, total, li, lb, grad):
        nonlocal last_record_time, last_record_epoch
        now = time.perf_counter()
        iters = epoch - last_record_epoch
        ms = 1000.0 * (now - last_record_time) / iters if iters > 0 else None
        last_record_time = now
        last_record_epoch = epoch
        sig = (
            sigma_proxy(grad, prev_grad, theta, prev_theta)
            if prev_grad is not None
            else None
        )
        l2 = linf = None
        if metrics_fn is not None:
            l2, linf = metrics_fn(theta)
        history.append(
            HistoryRow(
                epoch=epoch_offset + epoch,
                total_loss=total,
                int_loss=li,
                bc_loss=lb,
                grad_norm=float(np.linalg.norm(grad)),
                sigma_proxy=sig,
                l2=l2,
                linf=linf,
                ms_per_iter=ms,
                phase=phase,
                outer_k=outer_k,
            )
        )

    for epoch in range(epochs + 1):
        pool.reset()
        tape = T.Tape(pool)
        total, li, lb = loss_builder(tape, theta)
        total_val = float(total.value)
        if not math.isfinite(total_val):
            raise TrainingDivergenceError(
                f"non-finite loss at epoch {epoch_offset + epoch}",
                epoch=epoch_offset + epoch,
                history=history,
            )
        grad = tape.backward(total)
        if epoch % eval_every == 0 or epoch == epochs:
            record(epoch, total_val, float(li.value), float(lb.value), grad)
        if epoch == epochs:
            break
        prev_grad = grad
        prev_theta = theta
        try:
            state, theta = adam_step(state, theta, grad)
        except TrainingDivergenceError as err:
            err.epoch = epoch_offset + epoch
            err.history = history
            raise
    return theta, state, history


def grid_metrics_fn(arch: NetworkArch, spec, resolution: int):
    """l2/linf against the exact solution on the evaluation grid, if known."""
    if spec.exact is None:
        return None
    grid = eval_grid(spec.domain, resolution)
    exact_vals = spec.exact.value(grid)

    def metrics(theta):
        return errors_l2_linf(eval_values(arch, theta, grid), exact_vals, grid)

    return metrics


def train(spec, arch: NetworkArch, cfg: LossConfig, epochs: int, seed: int,
          eval_every: int = 500, lr: float = 3e-4, grid_resolution: int = 200,
          initial_params: np.ndarray | None = None,
          points: np.ndarray | None = None,
          bc_points: np.ndarray | None = None) -> TrainResult:
    """Train a network on a linear benchmark with fixed collocation sets.

    Seeds: network init uses ``seed``, interior sampling ``seed + 1``,
    boundary sampling ``seed + 2``. ``epochs = 0`` records only the initial
    row and returns the untouched initialization.
    """
    if spec.problem_class not in ("linear",):
        raise ValueError(
            f"train() handles linear problems; {spec.name} is {spec.problem_class}"
        )
    if arch.input_dim != spec.dim:
        raise ValueError(f"architecture input_dim {arch.input_dim} != domain dim {spec.dim}")
    if points is None:
        points = sample_interior(spec.domain, cfg.n_interior, seed + 1, spec.singular_sets)
    if bc_points is None:
        bc_points = sample_boundary(spec.domain, cfg.n_boundary, seed + 2)
    theta0 = initial_params if initial_params is not None else init_network(arch, seed)
    system = prepare_system(spec, points, bc_points, cfg)

    def builder(tape, theta):
        li, lb = system_losses(tape, arch, theta, system)
        total = T.add(T.scale(li, cfg.w_int), T.scale(lb, cfg.w_bc))
        return total, li, lb

    theta, _, history = run_adam_loop(
        arch,
        theta0,
        builder,
        epochs,
        eval_every,
        metrics_fn=grid_metrics_fn(arch, spec, grid_resolution),
        lr=lr,
    )
    config = {
        "problem": spec.name,
        "arch": list(arch.hidden_widths),
        "epochs": epochs,
        "eval_every": eval_every,
        "lr": lr,
        "grid_resolution": grid_resolution,
        **cfg.to_dict(),
    }
    return TrainResult(params=theta, history=history, seed=seed, config=config)
