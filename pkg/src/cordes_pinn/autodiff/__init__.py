from .tape import Tape, Var, loss_backward
from .network import (
    NetworkArch,
    ParamLayout,
    PackedIndex,
    Jet2,
    JetBatch,
    init_network,
    forward_jets,
    jet2_eval,
    eval_values,
    eval_jets,
    finite_diff_jet,
    packed_index,
    param_layout,
)

__all__ = [
    "Tape",
    "Var",
    "loss_backward",
    "NetworkArch",
    "ParamLayout",
    "PackedIndex",
    "Jet2",
    "JetBatch",
    "init_network",
    "forward_jets",
    "jet2_eval",
    "eval_values",
    "eval_jets",
    "finite_diff_jet",
    "packed_index",
    "param_layout",
]
