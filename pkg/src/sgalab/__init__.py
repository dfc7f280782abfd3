"""sgalab: simulation and prediction for fixed-step stochastic gradient loops.

The package has three layers:

* simulation: statistical models plus a seedable engine that runs the
  stochastic-gradient family (plain, momentum, control-variate) on a dataset;
* prediction: closed-form large-sample characterization of the same loops
  as discretized Ornstein-Uhlenbeck processes: stationary and time-t
  covariances, iterate-average covariances, mixing times, and tuning
  recommendations that hit a requested target covariance;
* diagnostics: estimators that quantify how well a finished run matches
  its prediction.

The two routes never share code: predictions come from matrix algebra on
information matrices, simulations from the actual update loop, and the
diagnostics layer is the only place they meet.
"""

from . import diagnostics, engine, inference, linalg, models, theory, tuning
from .errors import (
    ArtifactMismatchError,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    NonConvergenceError,
    NonFiniteError,
    NumericalError,
    RecommendationError,
    RegimeError,
    SgaLabError,
    StabilityError,
)

__version__ = "0.1.0"

__all__ = [
    "diagnostics",
    "engine",
    "inference",
    "linalg",
    "models",
    "theory",
    "tuning",
    "ArtifactMismatchError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "NonConvergenceError",
    "NonFiniteError",
    "NumericalError",
    "RecommendationError",
    "RegimeError",
    "SgaLabError",
    "StabilityError",
]
