"""Sequential conic optimization engine for 6-DoF powered-descent guidance."""

from .dynamics import DiscreteDynamics, VehicleParams
from .engine import SecoConfig, SecoReport, Trajectory, solve
from .pipg import SolverSettings, pipg_custom, pipg_generic
from .subproblem import ConstraintParams, Weights

__version__ = "0.1.0"

__all__ = [
    "ConstraintParams",
    "DiscreteDynamics",
    "SecoConfig",
    "SecoReport",
    "SolverSettings",
    "Trajectory",
    "VehicleParams",
    "Weights",
    "pipg_custom",
    "pipg_generic",
    "solve",
    "__version__",
]
