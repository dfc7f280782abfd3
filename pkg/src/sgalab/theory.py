"""Large-sample predictions for fixed-step stochastic-gradient loops.

Under polynomial-in-n tuning schedules, the rescaled iterate sequence
behaves like a discretized linear diffusion with drift matrix ``-B/2`` and
diffusion matrix ``A``.  This module computes, from the tuning and a pair of
information matrices (curvature ``J`` and score covariance ``I``):

* the scaling regime itself: the local scale exponent, the slowdown
  exponent, and which noise sources survive in the limit;
* the limit matrices ``(B, A)``, including the doubled-state momentum lift
  and the control-variate variant whose minibatch noise is always
  lower-order;
* stationary, time-t, and path-average covariances of the limit process;
* mixing-time estimates in iterations and epochs;
* tuning recommendations that achieve a requested stationary covariance,
  with an algebraic closure check.

Everything here is plain matrix algebra; nothing simulates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DimensionError,
    RecommendationError,
    RegimeError,
    StabilityError,
)
from .inference import InfoMatrices
from .tuning import (
    CONTROL_VARIATE,
    MOMENTUM,
    PLAIN,
    WITHOUT_REPLACEMENT,
    TuningConfig,
)

_FLAG_TOL = 1e-12


@dataclass
class ScalingLaw:
    """Exponent bookkeeping for one tuning configuration.

    ``local_exponent`` is the rescaling power: fluctuations of size
    ``n**-local_exponent`` around the anchor are order one after rescaling.
    ``slowdown`` is the exponent separating algorithmic time from limit
    time (one limit-time unit is ``n**slowdown`` iterations up to the step
    constant).  The three activity flags say which terms survive in the
    limit drift/diffusion; each is paired with its limit constant
    (``c_drift``, ``c_gauss``, ``c_minibatch``), zero when inactive.
    ``batch_correction`` is the without-replacement factor, reaching zero
    exactly for full-batch sampling.
    """

    frak_h: float
    frak_b: float
    frak_t: float
    local_exponent: float
    slowdown: float
    drift_active: bool
    gaussian_active: bool
    minibatch_active: bool
    c_drift: float
    c_gauss: float
    c_minibatch: float
    batch_correction: float
    variant: str


def scaling_law(cfg: TuningConfig) -> ScalingLaw:
    """Derive the scaling regime of a tuning configuration.

    Raises :class:`RegimeError` (naming the violated inequality) when the
    configuration sits outside the valid region: the slowdown exponent must
    be positive and the local scale exponent must lie strictly inside
    (0, 1).  Infinite temperature is handled as a genuine +inf, never as a
    numeric sentinel.
    """
    h_exp, b_exp = cfg.frak_h, cfg.frak_b
    t_exp = cfg.temperature_exponent

    if cfg.variant == CONTROL_VARIATE:
        if math.isinf(t_exp):
            raise RegimeError(
                "control-variate scaling requires a finite temperature"
                " exponent: the surviving noise is the injected Gaussian,"
                " so frak_t < +inf must hold"
            )
        w = 0.5 * t_exp
        slowdown = h_exp  # minibatch noise is always lower-order here
        drift_active = True
        gaussian_active = True
        minibatch_active = False
    else:
        w = 0.5 * min(b_exp + h_exp, t_exp)
        cand_gauss = (h_exp + t_exp - 2.0 * w) if math.isfinite(t_exp) else math.inf
        cand_minibatch = b_exp + 2.0 * h_exp - 2.0 * w
        slowdown = min(h_exp, cand_gauss, cand_minibatch)
        drift_active = h_exp <= slowdown + _FLAG_TOL
        gaussian_active = cand_gauss <= slowdown + _FLAG_TOL
        minibatch_active = cand_minibatch <= slowdown + _FLAG_TOL

    if not slowdown > 0.0:
        raise RegimeError(
            f"invalid regime: slowdown exponent min(frak_h, frak_h + frak_t"
            f" - 2w, frak_b + 2 frak_h - 2w) = {slowdown} violates"
            " slowdown > 0"
        )
    if not 0.0 < w < 1.0:
        raise RegimeError(
            f"invalid regime: local scale exponent w = {w} violates"
            " 0 < w < 1"
        )

    full_batch_wo = (
        b_exp == 1.0 and cfg.policy == WITHOUT_REPLACEMENT
    )
    batch_correction = 1.0 - cfg.c_b if full_batch_wo else 1.0
    if batch_correction < 0.0:
        raise RegimeError(
            f"invalid regime: batch correction 1 - c_b = {batch_correction}"
            " is negative (c_b must be <= 1 when frak_b = 1 without"
            " replacement)"
        )

    c_drift = cfg.c_h if drift_active else 0.0
    c_gauss = (cfg.c_h / cfg.c_beta) if (gaussian_active and cfg.has_noise) else 0.0
    c_minibatch = (
        cfg.c_h**2 * batch_correction / (4.0 * cfg.c_b) if minibatch_active else 0.0
    )
    return ScalingLaw(
        frak_h=h_exp,
        frak_b=b_exp,
        frak_t=t_exp,
        local_exponent=w,
        slowdown=slowdown,
        drift_active=drift_active,
        gaussian_active=gaussian_active,
        minibatch_active=minibatch_active,
        c_drift=c_drift,
        c_gauss=c_gauss,
        c_minibatch=c_minibatch,
        batch_correction=batch_correction,
        variant=cfg.variant,
    )


@dataclass
class OuParams:
    """Limit drift/diffusion pair plus everything needed downstream.

    ``b_mat`` is the drift factor (the limit process has drift
    ``-b_mat/2``), ``a_mat`` the diffusion matrix.  For the momentum
    variant these live on the doubled state and ``dim`` stays the
    parameter dimension; ``theta_block`` extracts the parameter marginal
    of doubled-state matrices.
    """

    b_mat: np.ndarray
    a_mat: np.ndarray
    dim: int
    state_dim: int
    law: ScalingLaw
    cfg: TuningConfig
    gamma: np.ndarray
    lam: np.ndarray
    j_mat: np.ndarray
    i_mat: np.ndarray

    def theta_block(self, m: np.ndarray) -> np.ndarray:
        return m[: self.dim, : self.dim]


def _as_square(name: str, m: np.ndarray, d: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (d, d):
        raise DimensionError(f"{name} must be {d}x{d}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError(f"{name} contains non-finite entries")
    return m


def ou_params(
    cfg: TuningConfig, j_mat: np.ndarray, i_mat: np.ndarray
) -> OuParams:
    """Assemble the limit matrices for a tuning and information pair.

    Plain variant: ``B = c_h Gamma J`` and
    ``A = c_mb Gamma I Gamma' + c_g Lambda`` with each term present exactly
    when its noise source is active.  Control-variate: the minibatch term
    is dropped regardless of exponents.  Momentum: the doubled-state lift
    with zero upper-left diffusion block, carrying ``I`` (not its
    preconditioned form) in the lower-right minibatch block and ``Gamma``
    in the Gaussian block.
    """
    law = scaling_law(cfg)
    d = np.asarray(j_mat).shape[0]
    j_mat = _as_square("curvature matrix", j_mat, d)
    i_mat = _as_square("score covariance", i_mat, d)
    gamma = np.eye(d) if cfg.gamma is None else _as_square("gamma", cfg.gamma, d)
    lam = np.eye(d) if cfg.lam is None else _as_square("lambda", cfg.lam, d)

    if cfg.variant == MOMENTUM:
        mass = np.eye(d) if cfg.mass is None else _as_square("mass", cfg.mass, d)
        mass_inv = np.linalg.inv(mass)
        b_mat = np.zeros((2 * d, 2 * d))
        b_mat[:d, d:] = -mass_inv
        b_mat[d:, :d] = j_mat
        b_mat[d:, d:] = gamma @ mass_inv
        b_mat *= cfg.c_h
        a_mat = np.zeros((2 * d, 2 * d))
        if law.minibatch_active:
            a_mat[d:, d:] += law.c_minibatch * i_mat
        if law.gaussian_active and cfg.has_noise:
            a_mat[d:, d:] += law.c_gauss * gamma
        state_dim = 2 * d
    else:
        b_mat = cfg.c_h * (gamma @ j_mat)
        a_mat = np.zeros((d, d))
        if cfg.variant == CONTROL_VARIATE:
            a_mat += law.c_gauss * lam
        else:
            if law.minibatch_active:
                a_mat += law.c_minibatch * (gamma @ i_mat @ gamma.T)
            if law.gaussian_active and cfg.has_noise:
                a_mat += law.c_gauss * lam
        state_dim = d

    a_mat = 0.5 * (a_mat + a_mat.T)
    return OuParams(
        b_mat=b_mat,
        a_mat=a_mat,
        dim=d,
        state_dim=state_dim,
        law=law,
        cfg=cfg,
        gamma=gamma,
        lam=lam,
        j_mat=j_mat,
        i_mat=i_mat,
    )


def stationary_cov(ou: OuParams) -> np.ndarray:
    """Stationary covariance: the solution of ``B Q / 2 + Q B' / 2 = A``.

    Exists exactly when ``-B`` is Hurwitz; otherwise a
    :class:`StabilityError` explains that no stationary covariance exists.
    """
    return linalg.solve_lyapunov(ou.b_mat, ou.a_mat)


def marginal_cov(
    ou: OuParams, t: float, q0: np.ndarray | None = None
) -> np.ndarray:
    """Covariance of the limit process at time ``t`` from a start covariance.

    For a stable drift this is ``Q_inf - E Q_inf E' + E Q0 E'`` with
    ``E = exp(-t B / 2)``; when ``-B`` is not Hurwitz (so no stationary
    covariance exists) the defining integral is evaluated by quadrature
    instead, which stays finite for finite ``t``.
    """
    if t < 0.0 or not math.isfinite(t):
        raise DimensionError(f"time must be finite and >= 0, got {t}")
    dsize = ou.state_dim
    q0_mat = np.zeros((dsize, dsize)) if q0 is None else np.asarray(q0, float)
    if q0_mat.shape != (dsize, dsize):
        raise DimensionError(f"q0 must be {dsize}x{dsize}")
    if t == 0.0:
        return q0_mat.copy()
    decay = linalg.expm(-0.5 * t * ou.b_mat)
    if linalg.is_hurwitz(-ou.b_mat):
        q_inf = stationary_cov(ou)
        out = q_inf - decay @ q_inf @ decay.T + decay @ q0_mat @ decay.T
        return 0.5 * (out + out.T)

    def integrand(s: float) -> np.ndarray:
        e = linalg.expm(-0.5 * s * ou.b_mat)
        return e @ ou.a_mat @ e.T

    scale = max(float(np.linalg.norm(ou.a_mat)), 1.0)
    accumulated = linalg.integrate_matrix(integrand, 0.0, t, tol=1e-12 * scale)
    out = accumulated + decay @ q0_mat @ decay.T
    return 0.5 * (out + out.T)


@dataclass
class AvgCovResult:
    """Covariance of the stationary path average over ``[0, t]``.

    ``exact`` is the closed form; ``small_t`` and ``large_t`` are the two
    asymptotic estimates together with the time thresholds delimiting
    where each is advertised to apply (small times well below
    ``small_t_threshold``, large times well above ``large_t_threshold``).
    """

    t: float
    exact: np.ndarray
    small_t: np.ndarray
    large_t: np.ndarray
    small_t_threshold: float
    large_t_threshold: float


def avg_cov_exact(ou: OuParams, t: float) -> AvgCovResult:
    """Exact covariance of the time average of the stationary limit process.

    ``Cov = (4/t) B^-1 A B^-T - (8/t^2) Sym(B^-2 (I - exp(-tB/2)) Q_inf)``.
    Requires ``t > 0`` and a stable drift.
    """
    if not (math.isfinite(t) and t > 0.0):
        raise DimensionError(f"averaging horizon must be finite and > 0, got {t}")
    q_inf = stationary_cov(ou)
    dsize = ou.state_dim
    eye = np.eye(dsize)
    b_inv = np.linalg.solve(ou.b_mat, eye)
    first = (4.0 / t) * (b_inv @ ou.a_mat @ b_inv.T)
    first = 0.5 * (first + first.T)
    decay = linalg.expm(-0.5 * t * ou.b_mat)
    inner = b_inv @ b_inv @ (eye - decay) @ q_inf
    second = (8.0 / t**2) * linalg.sym(inner)
    exact = first - second
    b2q = float(np.linalg.norm(b_inv @ b_inv @ q_inf, 2))
    b_norm = float(np.linalg.norm(ou.b_mat, 2))
    return AvgCovResult(
        t=t,
        exact=0.5 * (exact + exact.T),
        small_t=q_inf - (t / 6.0) * ou.a_mat,
        large_t=first,
        small_t_threshold=7.0 * b_norm**2 * math.sqrt(b2q),
        large_t_threshold=3.0 * math.sqrt(b2q),
    )


@dataclass
class AvgCovRescaled:
    """Predicted covariance of rescaled iterate averages over ``m`` epochs.

    ``matrix`` multiplies ``n**(frak_b + frak_h)`` times the covariance of
    the iterate average.  In the no-injected-noise unit-work regime the
    ``simple`` form ``(1/m) J^-1 I J^-1`` applies with ``remainder_bound``
    controlling the gap; both are None outside that regime.
    ``in_stated_regime`` records whether the temperature exponent also
    stays in the range where the averaged-iterate law holds (frak_t <= 1).
    """

    m: float
    limit_time: float
    matrix: np.ndarray
    simple: np.ndarray | None
    remainder_bound: float | None
    in_stated_regime: bool


def avg_cov_rescaled(ou: OuParams, m: float) -> AvgCovRescaled:
    """Iterate-average covariance prediction after ``m`` epochs.

    The average runs over ``floor(m * n**frak_h / c_b)`` iterations of a
    stationary-started chain, i.e. ``m / c_b`` limit-time units; epochs and
    limit time coincide up to the batch constant.  Valid when
    ``frak_b + frak_h <= frak_t`` (otherwise a :class:`RegimeError` names
    the violated inequality); the stated regime also has ``frak_t <= 1``,
    recorded as a flag.
    """
    law = ou.law
    if law.variant != PLAIN:
        raise RegimeError(
            "iterate-average prediction is defined for the plain variant"
            f" only, not {law.variant!r}"
        )
    if not (math.isfinite(m) and m > 0.0):
        raise DimensionError(f"epoch count m must be finite and > 0, got {m}")
    if law.frak_b + law.frak_h > law.frak_t:
        raise RegimeError(
            "iterate-average regime violated: frak_b + frak_h ="
            f" {law.frak_b + law.frak_h} exceeds frak_t = {law.frak_t}"
        )
    cfg = ou.cfg
    q_inf = stationary_cov(ou)
    p_mat = ou.gamma @ ou.j_mat
    eye = np.eye(ou.state_dim)
    c_b, c_h = cfg.c_b, cfg.c_h
    term1 = (4.0 * c_b / (c_h * m)) * linalg.sym(np.linalg.solve(p_mat, q_inf))
    decay = linalg.expm(-(m * c_h / (2.0 * c_b)) * p_mat)
    inner = np.linalg.solve(p_mat, np.linalg.solve(p_mat, (eye - decay) @ q_inf))
    term2 = (8.0 * c_b**2 / (c_h**2 * m**2)) * linalg.sym(inner)
    matrix = term1 - term2

    simple = None
    remainder = None
    if law.frak_b + law.frak_h == 1.0 and not cfg.has_noise:
        half = np.linalg.solve(ou.j_mat, ou.i_mat)
        sandwich = np.linalg.solve(ou.j_mat, half.T)
        simple = (1.0 / m) * 0.5 * (sandwich + sandwich.T)
        tail = np.linalg.solve(p_mat, np.linalg.solve(p_mat, q_inf))
        remainder = (8.0 * c_b**2 / (c_h**2 * m**2)) * float(
            np.linalg.norm(tail, 2)
        )
    return AvgCovRescaled(
        m=m,
        limit_time=m / c_b,
        matrix=0.5 * (matrix + matrix.T),
        simple=simple,
        remainder_bound=remainder,
        in_stated_regime=law.frak_t <= 1.0,
    )


@dataclass
class MixingTime:
    """Relaxation-time predictions in three conventions.

    ``epochs_iact``: two-sided integrated-autocorrelation calibration,
    ``4 c_b n^(frak_h + frak_b - 1) / rate`` epochs, the headline number
    comparable to measured autocorrelation times.  ``epochs_gap`` is the
    reciprocal-spectral-gap convention, exactly half of it.
    ``iterations`` is ``2 n^frak_h / rate`` algorithmic steps.  ``rate``
    is the smallest real part over the spectrum of the drift factor B.
    """

    epochs_iact: float
    epochs_gap: float
    iterations: float
    rate: float


def mixing_time(ou: OuParams, n: int) -> MixingTime:
    """Predicted relaxation time of the loop at sample size ``n``."""
    rate = linalg.min_real_eig(ou.b_mat)
    if rate <= linalg.HURWITZ_EPS:
        raise StabilityError(
            "mixing time undefined: the drift has a transient direction"
            f" (min real eigenvalue {rate:.3e} <= 0)"
        )
    law = ou.law
    epoch_factor = ou.cfg.c_b * float(n) ** (law.frak_h + law.frak_b - 1.0)
    return MixingTime(
        epochs_iact=4.0 * epoch_factor / rate,
        epochs_gap=2.0 * epoch_factor / rate,
        iterations=2.0 * float(n) ** law.frak_h / rate,
        rate=rate,
    )


@dataclass
class Recommendation:
    """A tuning that provably hits a target stationary covariance."""

    target: str
    cfg: TuningConfig
    target_cov: np.ndarray
    achieved_cov: np.ndarray
    closure_residual: float
    mixing_epochs: float
    notes: list[str] = field(default_factory=list)


def _inv_spd(name: str, m: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))
    if vals[0] <= 0.0:
        raise RecommendationError(
            f"{name} must be positive definite to be inverted as a"
            f" preconditioner (min eigenvalue {vals[0]:.3e})"
        )
    out = np.linalg.solve(m, np.eye(m.shape[0]))
    return 0.5 * (out + out.T)


def recommend_tuning(
    target: str,
    info: InfoMatrices,
    w1: float | None = None,
    w2: float | None = None,
    family: str | None = None,
    frak_b: float = 0.0,
    c_b: float = 1.0,
    policy: str = "with_replacement",
    seed: int = 0,
) -> Recommendation:
    """Construct a tuning whose predicted stationary covariance is a target.

    Targets (all at unit work, ``frak_h = 1 - frak_b``):

    * ``local_fiducial``: noiseless loop whose stationary covariance is
      the sandwich ``J^-1 I J^-1`` (weights ``w1 = 1, w2 = 0``);
    * ``sandwich_weighted``: ``w1 * J^-1 I J^-1 + w2 * J^-1`` mixtures;
    * ``bagged``: equal-weight mixture, ``w1 = w2`` (default 1/2);
    * ``posterior``: covariance ``J^-1``; via the control-variate loop by
      default (``family='sgld_fp'``), or via a noiseless loop
      preconditioned by the inverse score covariance (``family='sgd'``).

    Every recommendation is closure-checked: the limit matrices assembled
    from it must reproduce the target covariance to 1e-9.
    """
    j_mat, i_mat = info.j_mat, info.i_mat
    notes: list[str] = []
    frak_h = 1.0 - frak_b
    if not 0.0 <= frak_b < 1.0:
        raise RecommendationError(
            f"frak_b preference must lie in [0, 1) at unit work, got {frak_b}"
        )
    if frak_b == 1.0 or frak_h <= 0.0:
        raise RecommendationError("unit-work schedules need frak_h = 1 - frak_b > 0")

    def sandwich() -> np.ndarray:
        half = np.linalg.solve(j_mat, i_mat)
        s = np.linalg.solve(j_mat, half.T)
        return 0.5 * (s + s.T)

    if target in ("local_fiducial", "sandwich_weighted", "bagged"):
        if target == "local_fiducial":
            w1_eff, w2_eff = 1.0, 0.0
        elif target == "bagged":
            w1_eff = 0.5 if w1 is None else float(w1)
            w2_eff = w1_eff
            if w2 is not None and float(w2) != w1_eff:
                raise RecommendationError(
                    "bagged target uses equal weights; pass w1 only"
                )
        else:
            if w1 is None or w2 is None:
                raise RecommendationError(
                    "sandwich_weighted target needs both w1 and w2"
                )
            w1_eff, w2_eff = float(w1), float(w2)
        if w1_eff <= 0.0 or w2_eff < 0.0:
            raise RecommendationError(
                f"weights must satisfy w1 > 0 and w2 >= 0, got ({w1_eff}, {w2_eff})"
            )
        if family not in (None, "sgd", "sgld"):
            raise RecommendationError(
                f"family {family!r} cannot reach target {target!r}"
            )
        if family == "sgd" and w2_eff > 0.0:
            raise RecommendationError(
                "a noiseless loop cannot produce the J^-1 mixture component;"
                " drop the w2 weight or allow injected noise"
            )
        gamma = _inv_spd("curvature matrix", j_mat)
        cfg = TuningConfig(
            frak_h=frak_h,
            frak_b=frak_b,
            frak_t=1.0 if w2_eff > 0.0 else math.inf,
            c_h=4.0 * w1_eff * c_b,
            c_b=c_b,
            c_beta=(1.0 / w2_eff) if w2_eff > 0.0 else math.inf,
            gamma=gamma,
            lam=gamma,
            policy=policy,
            seed=seed,
            labels={"recommendation": target},
        )
        target_cov = w1_eff * sandwich() + w2_eff * gamma
        notes.append(
            f"stationary covariance {w1_eff} * sandwich + {w2_eff} * J^-1"
        )

    elif target == "posterior":
        fam = "sgld_fp" if family is None else family
        if fam == "sgld_fp":
            gamma = _inv_spd("curvature matrix", j_mat)
            cfg = TuningConfig(
                frak_h=frak_h,
                frak_b=frak_b,
                frak_t=1.0,
                c_h=4.0 * c_b,
                c_b=c_b,
                c_beta=1.0,
                gamma=gamma,
                lam=gamma,
                policy=policy,
                variant=CONTROL_VARIATE,
                seed=seed,
                labels={"recommendation": target},
            )
            notes.append(
                "anchored control-variate loop: injected noise dominates,"
                " stationary covariance J^-1 at unit temperature scale"
            )
        elif fam == "sgd":
            if policy == WITHOUT_REPLACEMENT and frak_b == 1.0:
                raise RecommendationError(
                    "full-batch sampling kills the minibatch noise this"
                    " recommendation relies on"
                )
            gamma = _inv_spd("score covariance", i_mat)
            cfg = TuningConfig(
                frak_h=frak_h,
                frak_b=frak_b,
                frak_t=math.inf,
                c_h=4.0 * c_b,
                c_b=c_b,
                policy=policy,
                gamma=gamma,
                lam=gamma,
                seed=seed,
                labels={"recommendation": target},
            )
            notes.append(
                "noiseless loop preconditioned by the inverse score"
                " covariance; minibatch noise alone reproduces J^-1"
            )
        else:
            raise RecommendationError(
                f"posterior target is unreachable with family {fam!r}:"
                " plain injected-noise loops only match J^-1 when the score"
                " covariance equals the curvature; use 'sgld_fp' or 'sgd'"
            )
        target_cov = _inv_spd("curvature matrix", j_mat)
    else:
        raise RecommendationError(
            f"unknown target {target!r}; expected local_fiducial,"
            " sandwich_weighted, bagged, or posterior"
        )

    ou = ou_params(cfg, j_mat, i_mat)
    achieved = stationary_cov(ou)
    residual = float(
        np.linalg.norm(achieved - target_cov)
        / (1.0 + np.linalg.norm(target_cov))
    )
    if residual > 1e-9:
        raise RecommendationError(
            f"closure check failed: achieved covariance misses the target"
            f" by relative residual {residual:.3e}"
        )
    rate = linalg.min_real_eig(ou.b_mat)
    mixing_epochs = 4.0 * cfg.c_b / rate  # n-free at unit work
    return Recommendation(
        target=target,
        cfg=cfg,
        target_cov=target_cov,
        achieved_cov=achieved,
        closure_residual=residual,
        mixing_epochs=mixing_epochs,
        notes=notes,
    )


@dataclass
class PredictionReport:
    """Bundle of every prediction for one configuration at one sample size."""

    n: int
    law: ScalingLaw
    ou: OuParams
    q_inf: np.ndarray
    mixing: MixingTime
    marginals: dict[float, np.ndarray]
    averages: dict[float, AvgCovRescaled]
    average_errors: dict[float, str]

    def to_json_dict(self) -> dict:
        def num(v: float):
            return "inf" if math.isinf(v) else v

        law = self.law
        out = {
            "n": self.n,
            "config": self.ou.cfg.to_dict(),
            "law": {
                "frak_h": num(law.frak_h),
                "frak_b": num(law.frak_b),
                "frak_t": num(law.frak_t),
                "local_exponent": law.local_exponent,
                "slowdown": law.slowdown,
                "drift_active": law.drift_active,
                "gaussian_active": law.gaussian_active,
                "minibatch_active": law.minibatch_active,
                "c_drift": law.c_drift,
                "c_gauss": law.c_gauss,
                "c_minibatch": law.c_minibatch,
                "batch_correction": law.batch_correction,
                "variant": law.variant,
            },
            "b_mat": self.ou.b_mat.tolist(),
            "a_mat": self.ou.a_mat.tolist(),
            "q_inf": self.q_inf.tolist(),
            "mixing": {
                "epochs_iact": self.mixing.epochs_iact,
                "epochs_gap": self.mixing.epochs_gap,
                "iterations": self.mixing.iterations,
                "rate": self.mixing.rate,
            },
            "marginals": {str(t): m.tolist() for t, m in self.marginals.items()},
            "averages": {
                str(m): {
                    "matrix": a.matrix.tolist(),
                    "simple": None if a.simple is None else a.simple.tolist(),
                    "remainder_bound": a.remainder_bound,
                    "limit_time": a.limit_time,
                    "in_stated_regime": a.in_stated_regime,
                }
                for m, a in self.averages.items()
            },
            "average_errors": dict(self.average_errors),
        }
        return out


def predict(
    cfg: TuningConfig,
    j_mat: np.ndarray,
    i_mat: np.ndarray,
    n: int,
    m_values: Sequence[float] = (1.0, 8.0),
    t_grid: Sequence[float] = (),
) -> PredictionReport:
    """Compute the full prediction bundle for one configuration."""
    ou = ou_params(cfg, j_mat, i_mat)
    q_inf = stationary_cov(ou)
    mixing = mixing_time(ou, n)
    marginals = {float(t): marginal_cov(ou, float(t)) for t in t_grid}
    averages: dict[float, AvgCovRescaled] = {}
    average_errors: dict[float, str] = {}
    for m in m_values:
        try:
            averages[float(m)] = avg_cov_rescaled(ou, float(m))
        except RegimeError as exc:
            average_errors[float(m)] = str(exc)
    return PredictionReport(
        n=n,
        law=ou.law,
        ou=ou,
        q_inf=q_inf,
        mixing=mixing,
        marginals=marginals,
        averages=averages,
        average_errors=average_errors,
    )
