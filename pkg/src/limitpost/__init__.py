"""limitpost: optimal limit-order posting distance.

A penalized execution-cost model driven by a distance-decaying fill
intensity, exact Poisson representations of the cost and its derivatives,
a projected stochastic-approximation learner for the optimal distance, the
conservative admissibility criteria that justify it, and an empirical
co-monotony test harness.
"""

__version__ = "0.1.0"

from .market import ExecutionSetup, IntensityModel, PenaltySpec, fit_intensity, path_intensity
from .paths import BrownianSource, DiffusionSpec, EulerSource, PricePath, ReplaySource, RngStream
from .cost import CostCurve, PathBatch, grid_argmin, mc_cost_curve
from .optimizer import SaTrajectory, StepSchedule, polyak_average, run_sa, sa_step
from .errors import LimitpostError

__all__ = [
    "__version__",
    "ExecutionSetup",
    "IntensityModel",
    "PenaltySpec",
    "fit_intensity",
    "path_intensity",
    "BrownianSource",
    "DiffusionSpec",
    "EulerSource",
    "PricePath",
    "ReplaySource",
    "RngStream",
    "CostCurve",
    "PathBatch",
    "grid_argmin",
    "mc_cost_curve",
    "SaTrajectory",
    "StepSchedule",
    "polyak_average",
    "run_sa",
    "sa_step",
    "LimitpostError",
]
