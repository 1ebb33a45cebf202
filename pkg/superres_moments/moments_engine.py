# moments_engine.py
"""Method-of-moments sensitivity of the best linear combination of counts.

For counts with covariance Gamma and mean derivative D, the observable
m . N maximising (m . D)^2 / (m^T Gamma m) is m = eta Gamma^{-1} D, and the
maximum is M = D^T Gamma^{-1} D.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, null_space, qr, solve, solve_triangular

from superres_moments.demux_model import MomentData
from superres_moments.errors import DimensionMismatch, SingularCovariance, ZeroVariance

logger = logging.getLogger(__name__)

CONDITION_WARNING = 1e12


@dataclass(frozen=True)
class SensitivityResult:
    """Sensitivity M with the optimal unit-norm coefficients and their normalization."""

    m_value: float
    coeffs: np.ndarray
    eta: float
    condition: float = float("nan")


def _equilibrate(cov: np.ndarray):
    diag = np.diag(cov).copy()
    bad = np.nonzero(~(diag > 0))[0]
    if bad.size:
        direction = np.zeros(diag.size)
        direction[bad[0]] = 1.0
        raise SingularCovariance(
            f"Covariance has a non-positive diagonal entry at index {bad[0]} ({diag[bad[0]]})",
            null_direction=direction,
        )
    scale = 1.0 / np.sqrt(diag)
    return scale, cov * np.outer(scale, scale)


def _pivoted_solve(matrix: np.ndarray, rhs: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Column-pivoted QR solve with an explicit rank check."""
    q, r, perm = qr(matrix, pivoting=True)
    pivots = np.abs(np.diag(r))
    tol = matrix.shape[0] * np.finfo(float).eps * pivots[0]
    rank = int(np.sum(pivots > tol))
    if rank < matrix.shape[0]:
        null = null_space(matrix)
        direction = scale * null[:, 0]
        direction /= np.linalg.norm(direction)
        raise SingularCovariance(
            f"Covariance is rank deficient (rank {rank} of {matrix.shape[0]})",
            null_direction=direction,
        )
    y = solve_triangular(r, q.T @ rhs)
    out = np.empty_like(y)
    out[perm] = y
    return out


def solve_covariance(cov: np.ndarray, rhs: np.ndarray):
    """Gamma^{-1} rhs via an equilibrated symmetric solve.

    Returns the solution and the condition number of the equilibrated
    matrix. Bunch-Kaufman first; pivoted QR when that fails or reports an
    ill-conditioned system.
    """
    scale, scaled = _equilibrate(cov)
    condition = float(np.linalg.cond(scaled))
    if condition > CONDITION_WARNING:
        logger.warning(f"Covariance is ill conditioned (condition {condition:.3g})")
    rhs_scaled = scale * rhs
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            y = solve(scaled, rhs_scaled, assume_a="sym")
    except (LinAlgError, LinAlgWarning):
        logger.debug("Symmetric solve failed, falling back to pivoted QR")
        y = _pivoted_solve(scaled, rhs_scaled, scale)
    return scale * y, condition


def normalize_coefficients(vector: np.ndarray):
    """Unit-norm copy with the largest-magnitude entry positive, and 1/norm."""
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return np.zeros_like(vector), 0.0
    coeffs = vector / norm
    if coeffs[int(np.argmax(np.abs(coeffs)))] < 0:
        coeffs = -coeffs
    return coeffs, 1.0 / norm


def sensitivity(moment_data: MomentData) -> SensitivityResult:
    """M = D^T Gamma^{-1} D and the optimal coefficients m ~ Gamma^{-1} D."""
    deriv = moment_data.deriv
    if not np.any(deriv):
        return SensitivityResult(0.0, np.zeros(deriv.size), 0.0)
    weights, condition = solve_covariance(moment_data.cov, deriv)
    m_value = max(float(deriv @ weights), 0.0)
    coeffs, eta = normalize_coefficients(weights)
    return SensitivityResult(m_value, coeffs, eta, condition)


def chi_squared_inverse(moment_data: MomentData, coeffs) -> float:
    """Sensitivity (m . D)^2 / (m^T Gamma m) of the single observable m . N."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != moment_data.deriv.shape:
        raise DimensionMismatch(
            f"Coefficients of shape {coeffs.shape} for {moment_data.size} modes"
        )
    variance = float(coeffs @ moment_data.cov @ coeffs)
    if not variance > 0:
        raise ZeroVariance(f"Observable has variance {variance}")
    return float(coeffs @ moment_data.deriv) ** 2 / variance


def diagonal_sensitivity(moment_data: MomentData) -> float:
    """sum_k D_k^2 / Gamma_kk, ignoring the off-diagonal covariance."""
    diag = np.diag(moment_data.cov)
    signal = moment_data.deriv ** 2
    mask = diag > 0
    return float(np.sum(signal[mask] / diag[mask]))
