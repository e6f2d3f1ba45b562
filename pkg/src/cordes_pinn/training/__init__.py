from .losses import (
    LossConfig,
    CollocationSystem,
    prepare_system,
    system_losses,
    interior_residual_var,
    linear_residual,
    cordes_loss,
    boundary_loss,
    composite_loss,
)
from .adam import AdamState, adam_init, adam_step
from .loop import (
    HISTORY_COLUMNS,
    HistoryRow,
    TrainResult,
    train,
    run_adam_loop,
    grid_metrics_fn,
    errors_l2_linf,
    sigma_proxy,
)
from .landscape import LandscapeProbe, landscape_probe, filter_normalized_direction

__all__ = [
    "LossConfig",
    "CollocationSystem",
    "prepare_system",
    "system_losses",
    "interior_residual_var",
    "linear_residual",
    "cordes_loss",
    "boundary_loss",
    "composite_loss",
    "AdamState",
    "adam_init",
    "adam_step",
    "HISTORY_COLUMNS",
    "HistoryRow",
    "TrainResult",
    "train",
    "run_adam_loop",
    "grid_metrics_fn",
    "errors_l2_linf",
    "sigma_proxy",
    "LandscapeProbe",
    "landscape_probe",
    "filter_normalized_direction",
]
