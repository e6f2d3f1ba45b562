from .domains import (
    Rectangle,
    Ball,
    Ellipsoid,
    hypercube,
    jitter_points,
    sample_interior,
    sample_boundary,
    eval_grid,
)
from .registry import (
    ExactSolution,
    ProblemSpec,
    HJBSpec,
    get_problem,
    list_problems,
    source_from_exact,
)

__all__ = [
    "Rectangle",
    "Ball",
    "Ellipsoid",
    "hypercube",
    "jitter_points",
    "sample_interior",
    "sample_boundary",
    "eval_grid",
    "ExactSolution",
    "ProblemSpec",
    "HJBSpec",
    "get_problem",
    "list_problems",
    "source_from_exact",
]
