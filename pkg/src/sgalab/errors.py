"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to branch on gets its own class;
the command-line layer maps these onto process exit codes.
"""

from __future__ import annotations

import numpy as np


class SgaLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SgaLabError, ValueError):
    """Array arguments have incompatible or invalid shapes."""


class NonFiniteError(SgaLabError, ValueError):
    """An input or intermediate quantity contains NaN or infinity."""


class NumericalError(SgaLabError, RuntimeError):
    """An iterative numerical routine failed to reach its tolerance.

    Carries the best estimate produced so far (when one exists) together
    with a residual bound so callers can decide whether to accept it.
    """

    def __init__(self, message: str, best_estimate=None, residual: float | None = None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.residual = residual


class StabilityError(SgaLabError, ValueError):
    """The drift matrix is not stable, so no stationary covariance exists."""


class RegimeError(SgaLabError, ValueError):
    """The scaling exponents violate a validity condition.

    The message names the violated inequality.
    """


class ConfigError(SgaLabError, ValueError):
    """A configuration value or combination of values is invalid."""


class DataError(SgaLabError, ValueError):
    """A dataset violates the model's requirements or failed to parse."""


class NonConvergenceError(NumericalError):
    """An optimizer ran out of iterations; carries the last iterate."""

    def __init__(self, message: str, last_iterate=None, grad_norm: float | None = None):
        super().__init__(message, best_estimate=last_iterate, residual=grad_norm)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class DivergenceError(SgaLabError, RuntimeError):
    """An iterate left the trust region; carries where and when."""

    def __init__(self, message: str, step: int, last_iterate=None):
        super().__init__(message)
        self.step = step
        self.last_iterate = last_iterate


class RecommendationError(SgaLabError, ValueError):
    """A tuning target is unreachable under the stated preferences."""


class ArtifactMismatchError(SgaLabError, ValueError):
    """Artifacts being combined were produced from different configurations."""


def require_finite(name: str, arr) -> None:
    """Raise :class:`NonFiniteError` if ``arr`` contains NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")


def require_square(name: str, arr) -> None:
    """Raise :class:`DimensionError` unless ``arr`` is a square 2-d array."""
    a = np.asarray(arr)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {a.shape}")
