"""Estimators that quantify how well a run matches its prediction.

Three measurement primitives: the empirical covariance of rescaled iterates
from one long run, integrated autocorrelation times (with a Geyer-style
initial-positive-sequence truncation), and the across-replicate covariance
of rescaled iterate averages.  ``compare`` turns an (empirical, predicted)
matrix pair into a report with relative Frobenius error and optional
per-entry z-scores.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .engine import RunRecord
from .errors import ArtifactMismatchError, DataError, DimensionError
from .theory import OuParams

#: Minimum post-burn-in sample count per parameter dimension.
MIN_SAMPLES_PER_DIM = 10


def empirical_cov(record: RunRecord, burnin_fraction: float = 0.1) -> np.ndarray:
    """Sample covariance of the rescaled parameter trajectory.

    Discards the leading ``burnin_fraction`` of stored states, then forms
    the usual sample covariance (mean subtracted) of
    ``n**w * (theta_k - theta_hat)``.  Requires at least
    ``10 * dim`` post-burn-in samples.
    """
    if not 0.0 <= burnin_fraction < 1.0:
        raise DataError(f"burnin_fraction must be in [0, 1), got {burnin_fraction}")
    states = record.rescaled_states()
    start = int(math.floor(burnin_fraction * states.shape[0]))
    kept = states[start:]
    if kept.shape[0] < MIN_SAMPLES_PER_DIM * record.dim:
        raise DataError(
            f"too few post-burn-in samples ({kept.shape[0]}) for a"
            f" {record.dim}-dimensional covariance; need at least"
            f" {MIN_SAMPLES_PER_DIM * record.dim}"
        )
    return np.cov(kept, rowvar=False, ddof=1).reshape(record.dim, record.dim)


def _autocorrelation(series: np.ndarray) -> np.ndarray:
    """Sample autocorrelation at all lags via FFT, rho(0) = 1."""
    x = series - series.mean()
    t = x.size
    size = 1
    while size < 2 * t:
        size *= 2
    spec = np.fft.rfft(x, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:t].real / t
    if acov[0] <= 0.0:
        raise DataError("series is constant; autocorrelation time undefined")
    return acov / acov[0]


def _iact_core(series: np.ndarray) -> tuple[float, bool]:
    series = np.asarray(series, dtype=float).ravel()
    if series.size < 8:
        raise DataError(f"need at least 8 points for autocorrelation, got {series.size}")
    rho = _autocorrelation(series)
    t = series.size

    # Split-half drift guard: a trending mean inflates every lag.
    half = t // 2
    a, b = series[:half], series[half : 2 * half]
    pooled = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / half)
    drifted = bool(pooled > 0.0 and abs(a.mean() - b.mean()) > 5.0 * pooled)

    # White-noise short circuit: nonpositive lag-1 correlation truncates
    # the sum at lag 0, giving the independent-samples value exactly.
    if rho.size < 2 or rho[1] <= 0.0:
        return 1.0, drifted

    total = 0.0
    max_pairs = (min(rho.size, t // 2) - 1) // 2
    for mpair in range(max_pairs):
        pair = rho[2 * mpair] + rho[2 * mpair + 1]
        if pair <= 0.0:
            break
        total += pair
    tau = 2.0 * total - 1.0
    return max(tau, 1.0e-12), drifted


def autocorrelation(series: np.ndarray, max_lag: int | None = None) -> np.ndarray:
    """Sample autocorrelation of a scalar series at lags 0..max_lag."""
    x = np.asarray(series, float).ravel()
    if x.size < 2:
        raise DataError("need at least two samples for an autocorrelation")
    rho = _autocorrelation(x)
    if max_lag is None:
        return rho
    return rho[: max_lag + 1]


def iact(series: np.ndarray) -> float:
    """Integrated autocorrelation time of a scalar series.

    Sums sample autocorrelations under a Geyer-style initial-positive
    pair-sum truncation: ``tau = 2 * sum of leading positive pair sums - 1``.
    A nonpositive lag-1 correlation truncates at lag 0 and returns exactly
    1.  A split-half mean drift beyond five standard errors triggers a
    warning (the estimate is untrustworthy on a trending series).
    """
    tau, drifted = _iact_core(series)
    if drifted:
        warnings.warn(
            "series shows split-half mean drift beyond 5 standard errors;"
            " autocorrelation time may reflect non-stationarity"
        )
    return tau


@dataclass
class MixingSummary:
    """Worst-case measured autocorrelation time across directions.

    Coordinates are measured in the eigenbasis of the predicted drift
    factor when that basis is real (it decouples the limit process), else
    in raw coordinates (``rotated = False``).  Epoch conversions use the
    run's own steps-per-epoch and thinning stride.
    """

    epochs_per_coordinate: np.ndarray
    worst_epochs: float
    worst_coordinate: int
    rotated: bool
    drift_flags: np.ndarray


def mixing_summary(record: RunRecord, ou: OuParams | None = None) -> MixingSummary:
    """Measure autocorrelation times of a run, coordinate by coordinate.

    With a prediction in hand the trajectory is rotated into the predicted
    drift eigenbasis first, so the worst case is taken over (approximately)
    decoupled directions rather than arbitrary coordinates.
    """
    states = record.rescaled_states()
    rotated = False
    if ou is not None:
        b_theta = ou.b_mat[: record.dim, : record.dim]
        vals, vecs = np.linalg.eig(b_theta)
        if np.max(np.abs(vals.imag)) < 1e-10 * (1.0 + np.max(np.abs(vals.real))):
            try:
                states = states @ np.linalg.inv(vecs.real).T
                rotated = True
            except np.linalg.LinAlgError:
                rotated = False
    d = states.shape[1]
    taus = np.empty(d)
    drifts = np.zeros(d, dtype=bool)
    for j in range(d):
        taus[j], drifts[j] = _iact_core(states[:, j])
    steps_per_epoch = record.n / record.manifest["batch_size"]
    epochs = taus * record.thin / steps_per_epoch
    worst = int(np.argmax(epochs))
    return MixingSummary(
        epochs_per_coordinate=epochs,
        worst_epochs=float(epochs[worst]),
        worst_coordinate=worst,
        rotated=rotated,
        drift_flags=drifts,
    )


def _manifest_key(record: RunRecord) -> tuple:
    cfg = dict(record.manifest["config"])
    cfg.pop("seed", None)
    return (
        repr(sorted(cfg.items(), key=lambda kv: kv[0])),
        record.manifest["data_hash"],
        record.n_steps,
        record.avg_window,
    )


def replicate_avg_cov(records: list[RunRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Across-replicate covariance (and mean) of rescaled iterate averages.

    All replicates must share configuration (seed aside), dataset, step
    count and averaging window; anything else raises
    :class:`ArtifactMismatchError`.  Requires at least 30 replicates for
    the covariance to mean anything.
    """
    if len(records) < 30:
        raise DataError(
            f"need at least 30 replicates for a covariance, got {len(records)}"
        )
    key0 = _manifest_key(records[0])
    for r in records[1:]:
        if _manifest_key(r) != key0:
            raise ArtifactMismatchError(
                "replicates were produced from different configurations"
            )
    averages = np.stack([r.rescaled_avg() for r in records])
    cov = np.cov(averages, rowvar=False, ddof=1)
    return cov.reshape(averages.shape[1], averages.shape[1]), averages.mean(axis=0)


@dataclass
class ComparisonReport:
    """Agreement metrics between an empirical and a predicted matrix."""

    empirical: np.ndarray
    predicted: np.ndarray
    frobenius_error: float
    rel_frobenius_error: float
    max_abs_error: float
    z_scores: np.ndarray | None = None
    max_abs_z: float | None = None
    labels: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "empirical": self.empirical.tolist(),
            "predicted": self.predicted.tolist(),
            "frobenius_error": self.frobenius_error,
            "rel_frobenius_error": self.rel_frobenius_error,
            "max_abs_error": self.max_abs_error,
            "labels": dict(self.labels),
        }
        if self.z_scores is not None:
            out["z_scores"] = self.z_scores.tolist()
            out["max_abs_z"] = self.max_abs_z
        return out


def compare(
    empirical: np.ndarray,
    predicted: np.ndarray,
    standard_errors: np.ndarray | None = None,
    labels: dict | None = None,
) -> ComparisonReport:
    """Quantify agreement between matched empirical and predicted matrices.

    The headline number is the Frobenius error relative to the predicted
    matrix's norm.  When per-entry standard errors are supplied (e.g. from
    replicates), per-entry z-scores are included too.
    """
    empirical = np.asarray(empirical, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if empirical.shape != predicted.shape:
        raise DimensionError(
            f"shape mismatch: empirical {empirical.shape} vs predicted"
            f" {predicted.shape}"
        )
    diff = empirical - predicted
    fro = float(np.linalg.norm(diff))
    pred_norm = float(np.linalg.norm(predicted))
    if pred_norm == 0.0:
        raise DimensionError("predicted matrix is zero; relative error undefined")
    z_scores = None
    max_z = None
    if standard_errors is not None:
        standard_errors = np.asarray(standard_errors, dtype=float)
        if standard_errors.shape != empirical.shape:
            raise DimensionError("standard errors must match the matrix shape")
        with np.errstate(divide="ignore", invalid="ignore"):
            z_scores = np.where(standard_errors > 0.0, diff / standard_errors, np.inf)
        max_z = float(np.max(np.abs(z_scores)))
    return ComparisonReport(
        empirical=empirical,
        predicted=predicted,
        frobenius_error=fro,
        rel_frobenius_error=fro / pred_norm,
        max_abs_error=float(np.max(np.abs(diff))),
        z_scores=z_scores,
        max_abs_z=max_z,
        labels=labels or {},
    )
