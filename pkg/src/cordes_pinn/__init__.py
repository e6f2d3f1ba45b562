"""Cordes-preconditioned neural collocation solvers for non-divergence PDEs.

A mesh-free solver library and benchmark harness for linear non-divergence
elliptic equations and fully nonlinear problems (Hamilton-Jacobi-Bellman,
Monge-Ampere, optimal transport). The residual loss is rescaled pointwise by
tr(A)/(tr(A^2)+delta), the multiplier that makes the scaled second-order
operator a strict contraction of the Laplacian under the Cordes condition,
which keeps the optimization landscape well conditioned.
"""

from .autodiff import (
    Jet2,
    NetworkArch,
    Tape,
    eval_values,
    finite_diff_jet,
    forward_jets,
    init_network,
    jet2_eval,
    loss_backward,
)
from .cordes import CordesReport, check_cordes, contraction_gap, cordes_ratio, multiplier
from .estimators import CordesPinnSolver, DualLoopSolver, TransportMapEstimator
from .fdref import FDSolution, fd_reference_solve
from .nonlinear import (
    NetworkState,
    OuterConfig,
    SurrogateLinearPDE,
    cofactor,
    hjb_active_branch,
    hjb_outer_step,
    ma_linearize,
    solve_nonlinear,
)
from .problems import (
    HJBSpec,
    ProblemSpec,
    eval_grid,
    get_problem,
    list_problems,
    sample_boundary,
    sample_interior,
)
from .training import (
    AdamState,
    LossConfig,
    TrainResult,
    adam_step,
    boundary_loss,
    composite_loss,
    cordes_loss,
    errors_l2_linf,
    landscape_probe,
    linear_residual,
    sigma_proxy,
    train,
)
from .transport import (
    PotentialState,
    TransportProblem,
    example51_fields,
    ot_linearize,
    pushforward_check,
    solve_transport,
    transport_map,
)

__version__ = "0.1.0"
