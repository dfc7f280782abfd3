"""Dense matrix kernels used by the prediction formulas.

Everything here operates on small dense square matrices (tens of rows, not
thousands): symmetrization, spectra, stability tests, matrix exponentials,
the continuous-time Lyapunov solve that produces stationary covariances, and
an adaptive quadrature for matrix-valued integrands.  The Lyapunov solve is
deliberately the simplest provably-correct method at this scale (Kronecker
vectorization plus a dense LU solve); the quadrature exists as an independent
route to the same integrals so the two can be cross-checked.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    NumericalError,
    StabilityError,
    require_finite,
    require_square,
)

#: Margin used by stability tests: an eigenvalue real part within this
#: distance of zero counts as "on the boundary", i.e. not strictly stable.
HURWITZ_EPS = 1e-12


def sym(m: np.ndarray) -> np.ndarray:
    """Symmetric part ``(m + m.T) / 2`` of a square matrix."""
    m = np.asarray(m, dtype=float)
    require_square("sym argument", m)
    return 0.5 * (m + m.T)


def eigenvalues(m: np.ndarray) -> np.ndarray:
    """Full complex spectrum of a square matrix.

    Returned in ascending order of real part (ties broken by imaginary
    part) so that callers get a deterministic ordering.
    """
    m = np.asarray(m, dtype=float)
    require_square("eigenvalues argument", m)
    require_finite("eigenvalues argument", m)
    vals = np.linalg.eigvals(m)
    order = np.lexsort((vals.imag, vals.real))
    return vals[order]


def min_real_eig(m: np.ndarray) -> float:
    """Smallest real part over the spectrum of ``m``."""
    return float(np.min(eigenvalues(m).real))


def is_hurwitz(m: np.ndarray, eps: float = HURWITZ_EPS) -> bool:
    """True when every eigenvalue of ``m`` has real part below ``-eps``.

    The strict margin keeps semi-stable matrices (eigenvalues on the
    imaginary axis) from being treated as stable by rounding luck.
    """
    m = np.asarray(m, dtype=float)
    require_square("is_hurwitz argument", m)
    require_finite("is_hurwitz argument", m)
    return bool(np.max(np.linalg.eigvals(m).real) < -eps)


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximation)."""
    m = np.asarray(m, dtype=float)
    require_square("expm argument", m)
    require_finite("expm argument", m)
    return scipy.linalg.expm(m)


def psd_sqrt(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square root of a symmetric positive semi-definite matrix.

    Computed through the eigendecomposition; eigenvalues in
    ``[-tol * scale, 0)`` are clamped to zero, anything more negative is an
    error.  This is what turns a possibly singular diffusion matrix into a
    noise-injection factor.
    """
    m = np.asarray(m, dtype=float)
    require_square("psd_sqrt argument", m)
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(m).max())):
        raise DimensionError("psd_sqrt argument must be symmetric")
    vals, vecs = np.linalg.eigh(m)
    scale = max(float(vals[-1]), 1.0)
    if vals[0] < -tol * scale:
        raise StabilityError(
            f"matrix is not positive semi-definite (min eigenvalue {vals[0]:.3e})"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def solve_lyapunov(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Solve ``(1/2) B Q + (1/2) Q B^T = A`` for the stationary covariance Q.

    ``-B`` must be Hurwitz for a (unique, positive semi-definite) solution
    to exist; otherwise a :class:`StabilityError` is raised.  ``A`` is
    expected symmetric PSD; an asymmetric ``A`` is symmetrized with a
    warning.  The equation is vectorized as
    ``(1/2) (I (x) B + B (x) I) vec Q = vec A`` and solved densely, which is
    exact up to roundoff for the matrix sizes this package targets.
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    require_square("lyapunov drift matrix", b)
    require_square("lyapunov source matrix", a)
    if b.shape != a.shape:
        raise DimensionError(
            f"drift and source shapes differ: {b.shape} vs {a.shape}"
        )
    require_finite("lyapunov drift matrix", b)
    require_finite("lyapunov source matrix", a)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * (1.0 + np.abs(a).max())):
        warnings.warn("source matrix is not symmetric; using its symmetric part")
    a = 0.5 * (a + a.T)
    if not is_hurwitz(-b):
        raise StabilityError(
            "no stationary covariance: -B is not Hurwitz "
            f"(min real eigenvalue of B is {min_real_eig(b):.3e})"
        )
    d = b.shape[0]
    eye = np.eye(d)
    coeff = 0.5 * (np.kron(eye, b) + np.kron(b, eye))
    q = np.linalg.solve(coeff, a.reshape(-1, order="F")).reshape((d, d), order="F")
    q = 0.5 * (q + q.T)
    residual = np.linalg.norm(0.5 * (b @ q + q @ b.T) - a)
    if residual > 1e-9 * (1.0 + np.linalg.norm(a)):
        raise NumericalError(
            f"lyapunov solve residual {residual:.3e} exceeds tolerance",
            best_estimate=q,
            residual=residual,
        )
    return q


def integrate_matrix(
    f: Callable[[float], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_evals: int = 100_000,
) -> np.ndarray:
    """Adaptive Simpson quadrature of a matrix-valued integrand on ``[a, b]``.

    The panel-splitting criterion is applied entrywise in the max norm, with
    the tolerance distributed proportionally to panel width, so the result is
    accurate to roughly ``tol`` per entry over the whole interval.  If the
    evaluation budget runs out a :class:`NumericalError` is raised carrying
    the best estimate assembled so far and the worst outstanding panel error
    as ``residual``.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise DimensionError("integration endpoints must be finite")
    if b <= a:
        raise DimensionError("integration interval must satisfy a < b")

    evals = 0

    def call(t: float) -> np.ndarray:
        nonlocal evals
        evals += 1
        out = np.asarray(f(t), dtype=float)
        require_square("integrand value", out)
        require_finite("integrand value", out)
        return out

    fa, fm, fb = call(a), call(0.5 * (a + b)), call(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    # Work stack of panels: (left, right, f_left, f_mid, f_right,
    # simpson_estimate, panel_tolerance).
    stack = [(a, b, fa, fm, fb, whole, tol * 15.0)]
    total = np.zeros_like(whole)
    budget_hit = False
    worst_pending = 0.0

    while stack:
        left, right, fl, fm_, fr, s_whole, panel_tol = stack.pop()
        mid = 0.5 * (left + right)
        if evals + 2 > max_evals:
            budget_hit = True
            total += s_whole
            worst_pending = max(worst_pending, float(panel_tol))
            continue
        flm = call(0.5 * (left + mid))
        frm = call(0.5 * (mid + right))
        s_left = (mid - left) / 6.0 * (fl + 4.0 * flm + fm_)
        s_right = (right - mid) / 6.0 * (fm_ + 4.0 * frm + fr)
        err = np.max(np.abs(s_left + s_right - s_whole))
        if err <= panel_tol:
            # Richardson correction for the final panel value.
            total += s_left + s_right + (s_left + s_right - s_whole) / 15.0
        else:
            half_tol = panel_tol / 2.0
            stack.append((left, mid, fl, flm, fm_, s_left, half_tol))
            stack.append((mid, right, fm_, frm, fr, s_right, half_tol))

    if budget_hit:
        raise NumericalError(
            f"quadrature budget of {max_evals} evaluations exhausted",
            best_estimate=total,
            residual=worst_pending,
        )
    return total
