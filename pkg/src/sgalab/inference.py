"""M-estimation and empirical information matrices.

The prediction formulas are anchored at the root of the mean score
equation (the maximum-likelihood estimate under the default flat prior) and
consume two matrices evaluated there: the curvature matrix (minus the mean
per-record Hessian) and the score covariance (mean outer product of
per-record gradients).  Both are accumulated blockwise in a fixed partition
order so results are bit-reproducible regardless of dataset size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NonConvergenceError, NonFiniteError
from .linalg import sym
from .models import Dataset, ModelSpec

#: Rows per accumulation block; fixed so reductions are deterministic.
BLOCK_ROWS = 8192


def _mean_score(model: ModelSpec, records: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """(1/n) * (prior gradient + sum of per-record score rows), blockwise."""
    n = records.shape[0]
    total = np.zeros(model.dim)
    for start in range(0, n, BLOCK_ROWS):
        block = records[start : start + BLOCK_ROWS]
        total += model.grad(theta, block).sum(axis=0)
    return (total + model.grad_prior(theta)) / n


def _mean_hessian(model: ModelSpec, records: np.ndarray, theta: np.ndarray) -> np.ndarray:
    n = records.shape[0]
    total = np.zeros((model.dim, model.dim))
    for start in range(0, n, BLOCK_ROWS):
        block = records[start : start + BLOCK_ROWS]
        total += model.hess_mean(theta, block) * block.shape[0]
    return total / n


@dataclass
class MleResult:
    """Root of the mean score equation plus solver trace."""

    theta_hat: np.ndarray
    grad_norm: float
    iterations: int
    damped_steps: int
    tol: float


def fit_mle(
    model: ModelSpec,
    data: Dataset,
    init: np.ndarray | None = None,
    tol: float | None = None,
    max_iter: int = 100,
) -> MleResult:
    """Solve ``mean score(theta) = 0`` by damped Newton iteration.

    Starts from ``init`` (default the origin).  The default tolerance is
    ``1e-10 * (1 + ||score at init||)``.  Each iteration takes the Newton
    direction against the mean curvature and backtracks on the score norm
    (accepting a step of length s only if it shrinks the norm by at least a
    ``1 - s/4`` factor); a singular curvature matrix falls back to a
    least-squares direction.  Failure to converge raises
    :class:`NonConvergenceError` carrying the last iterate and score norm,
    which is how an estimate escaping to infinity (e.g. separable logistic
    data) is reported rather than silently iterated on.  A solution where
    the curvature has numerically collapsed (the score can underflow to
    zero while the iterate runs away, as with separable data) is rejected
    the same way: the fit is only accepted at a nondegenerate maximum.
    """
    records = model.check_records(data.records)
    theta = np.zeros(model.dim) if init is None else np.asarray(init, dtype=float)
    if theta.shape != (model.dim,):
        raise DimensionError(
            f"init must have shape ({model.dim},), got {theta.shape}"
        )

    score = _mean_score(model, records, theta)
    if not np.all(np.isfinite(score)):
        raise NonFiniteError("score at the initial point is not finite")
    norm0 = float(np.linalg.norm(score))
    if tol is None:
        tol = 1e-10 * (1.0 + norm0)
    norm = norm0
    damped = 0

    curv_scale = float(
        np.linalg.eigvalsh(sym(-_mean_hessian(model, records, theta)))[-1]
    )

    def _accept(theta, norm, iterations, damped):
        curvature = -_mean_hessian(model, records, theta)
        spectrum = np.linalg.eigvalsh(sym(curvature))
        lam_min, lam_max = float(spectrum[0]), float(spectrum[-1])
        if lam_min <= 1e-10 * max(curv_scale, lam_max):
            raise NonConvergenceError(
                "mean-score solver stopped at a point with numerically"
                f" singular curvature (min eigenvalue {lam_min:.3e}); the"
                " estimate may lie at infinity (e.g. separable"
                " classification data)",
                last_iterate=theta,
                grad_norm=norm,
            )
        return MleResult(theta, norm, iterations, damped, tol)

    for iteration in range(1, max_iter + 1):
        if norm <= tol:
            return _accept(theta, norm, iteration - 1, damped)
        curvature = -_mean_hessian(model, records, theta)
        try:
            direction = np.linalg.solve(curvature, score)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(curvature, score, rcond=None)[0]
        step = 1.0
        while True:
            candidate = theta + step * direction
            cand_score = _mean_score(model, records, candidate)
            cand_norm = float(np.linalg.norm(cand_score))
            if np.isfinite(cand_norm) and cand_norm <= (1.0 - 0.25 * step) * norm:
                break
            step *= 0.5
            if step < 1e-10:
                raise NonConvergenceError(
                    "mean-score solver stalled: no step length reduces the"
                    f" score norm below {norm:.3e}; the estimate may lie at"
                    " infinity (e.g. separable classification data)",
                    last_iterate=theta,
                    grad_norm=norm,
                )
        if step < 1.0:
            damped += 1
        theta, score, norm = candidate, cand_score, cand_norm

    if norm <= tol:
        return _accept(theta, norm, max_iter, damped)
    raise NonConvergenceError(
        f"mean-score solver did not reach tolerance {tol:.3e} in {max_iter}"
        f" iterations (score norm {norm:.3e}); the estimate may lie at"
        " infinity (e.g. separable classification data)",
        last_iterate=theta,
        grad_norm=norm,
    )


@dataclass
class InfoMatrices:
    """Curvature and score-covariance matrices at an anchor point.

    ``j_mat`` is minus the mean per-record Hessian, ``i_mat`` the mean outer
    product of per-record score rows, and ``sandwich`` the composition
    ``j_mat^-1 i_mat j_mat^-1`` computed through two linear solves (no
    explicit inverse is ever formed).
    """

    theta_hat: np.ndarray
    j_mat: np.ndarray
    i_mat: np.ndarray
    sandwich: np.ndarray
    grad_norm: float
    n: int
    labels: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.theta_hat.shape[0])


def empirical_info(model: ModelSpec, data: Dataset, theta: np.ndarray) -> InfoMatrices:
    """Evaluate the curvature and score-covariance matrices at ``theta``.

    Reductions run over fixed-size record blocks in data order, so repeated
    calls are bit-identical.  Only the likelihood terms enter the matrices;
    the prior contributes to the reported score norm but not to curvature,
    matching the large-sample role these matrices play.
    """
    records = model.check_records(data.records)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dim,):
        raise DimensionError(f"theta must have shape ({model.dim},)")
    n = records.shape[0]

    j_mat = -_mean_hessian(model, records, theta)
    outer = np.zeros((model.dim, model.dim))
    for start in range(0, n, BLOCK_ROWS):
        g = model.grad(theta, records[start : start + BLOCK_ROWS])
        outer += g.T @ g
    i_mat = outer / n

    j_mat = 0.5 * (j_mat + j_mat.T)
    i_mat = 0.5 * (i_mat + i_mat.T)
    half = np.linalg.solve(j_mat, i_mat)
    sandwich = np.linalg.solve(j_mat, half.T)
    sandwich = 0.5 * (sandwich + sandwich.T)
    grad_norm = float(np.linalg.norm(_mean_score(model, records, theta)))
    return InfoMatrices(
        theta_hat=theta.copy(),
        j_mat=j_mat,
        i_mat=i_mat,
        sandwich=sandwich,
        grad_norm=grad_norm,
        n=n,
    )


def info_from_truth(theta_star, j_star, i_star, n: int) -> InfoMatrices:
    """Package exact ground-truth matrices in the same container."""
    j = np.asarray(j_star, dtype=float)
    i = np.asarray(i_star, dtype=float)
    half = np.linalg.solve(j, i)
    sandwich = np.linalg.solve(j, half.T)
    return InfoMatrices(
        theta_hat=np.asarray(theta_star, dtype=float).copy(),
        j_mat=j.copy(),
        i_mat=i.copy(),
        sandwich=0.5 * (sandwich + sandwich.T),
        grad_norm=0.0,
        n=n,
        labels={"source": "truth"},
    )


@dataclass
class RegularityReport:
    """Local-regularity probe results around the anchor point."""

    ball_radius: float
    probes: int
    j_drift: float
    i_drift: float
    lambda_min_j: float
    flags: list[str]


def assumption_diagnostics(
    model: ModelSpec,
    data: Dataset,
    info: InfoMatrices,
    radius: float = 1.0,
    probes: int = 32,
    local_exponent: float = 0.5,
    seed: int = 0,
) -> RegularityReport:
    """Probe how much the information matrices move near the anchor.

    Points are drawn uniformly from the ball of radius
    ``radius / n**local_exponent`` around the anchor (the scale on which the
    large-sample picture is played out) and the worst Frobenius drift of
    each matrix is recorded, along with the smallest curvature eigenvalue.
    Flags name anything that undermines the predictions: non-positive
    curvature, rapid curvature drift, or a large residual score norm.
    """
    records = model.check_records(data.records)
    n = records.shape[0]
    ball = radius / float(n) ** local_exponent
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    j_drift = 0.0
    i_drift = 0.0
    for _ in range(probes):
        direction = rng.standard_normal(model.dim)
        direction /= max(np.linalg.norm(direction), 1e-300)
        point = info.theta_hat + ball * rng.uniform() ** (1.0 / model.dim) * direction
        probe = empirical_info(model, data, point)
        j_drift = max(j_drift, float(np.linalg.norm(probe.j_mat - info.j_mat)))
        i_drift = max(i_drift, float(np.linalg.norm(probe.i_mat - info.i_mat)))
    lambda_min = float(np.linalg.eigvalsh(info.j_mat)[0])

    flags: list[str] = []
    if lambda_min <= 0.0:
        flags.append("curvature matrix is not positive definite at the anchor")
    j_scale = max(float(np.linalg.norm(info.j_mat)), 1e-300)
    if j_drift > 0.5 * j_scale:
        flags.append("curvature drifts by more than half its size across the ball")
    if info.grad_norm > 1e-6 * (1.0 + np.linalg.norm(info.theta_hat)):
        flags.append("anchor point does not solve the mean score equation")
    return RegularityReport(
        ball_radius=ball,
        probes=probes,
        j_drift=j_drift,
        i_drift=i_drift,
        lambda_min_j=lambda_min,
        flags=flags,
    )
