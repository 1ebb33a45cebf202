# ideal_closed_form.py
"""Closed forms for ideal demultiplexing (aligned, no crosstalk, no dark counts).

With beta2_k = beta_nm(r0)^2, s_k = (-1)^{n+m} and o_k = n + m the ideal
covariance is diag(2 N kappa beta2) plus two rank-one terms, so its inverse,
the sensitivity M and the optimal coefficients follow from two Sherman-Morrison
updates. The alternating sum S1 = sum s_k (o_k - x^2)/x beta2_k is the one
that pairs with A+ in the coefficient formula, and S2 = sum (o_k - x^2)/x beta2_k
pairs with A-.

All sums are accumulated with math.fsum; the alternating ones cancel badly
at large Q.
"""

import math
from dataclasses import dataclass

import numpy as np

from superres_moments.errors import DegenerateScene
from superres_moments.hg_overlap import overlap_table
from superres_moments.moments_engine import SensitivityResult, normalize_coefficients
from superres_moments.scene import ModeBasis, Scene, axis_alignment


@dataclass(frozen=True)
class IdealIntermediates:
    a_plus: float
    a_minus: float
    b: float
    f_term: float
    delta1: float
    delta2: float
    delta3: float
    s1: float
    s2: float

    @property
    def determinant(self) -> float:
        return self.a_plus * self.a_minus - self.b ** 2


def ideal_basis(scene: Scene, q_max: int) -> ModeBasis:
    """Modes with non-zero overlap: all of them, or the 1D family along the source axis."""
    if scene.d == 0.0:
        raise DegenerateScene("Zero separation: the two sources coincide and d is not identifiable")
    axis = axis_alignment(scene.theta)
    return ModeBasis.axis(q_max, axis) if axis else ModeBasis.full(q_max)


def _mode_terms(scene: Scene, q_max: int):
    basis = ideal_basis(scene, q_max)
    beta2 = overlap_table(scene, basis=basis).f_plus ** 2
    orders = basis.orders
    signs = np.where(orders % 2 == 0, 1.0, -1.0)
    x = scene.x
    slope = (orders - x * x) / x
    return basis, beta2, signs, slope


def _intermediates(scene: Scene, beta2, signs, slope) -> IdealIntermediates:
    nk2 = 2.0 * scene.n_kappa
    g2 = scene.gamma ** 2
    total = math.fsum(beta2)
    a_plus = 2.0 / (1.0 + g2) + nk2 * total
    a_minus = 2.0 / (1.0 - g2) + nk2 * total
    b = nk2 * math.fsum(signs * beta2)
    f_term = math.fsum(slope ** 2 * beta2)
    s1 = math.fsum(signs * slope * beta2)
    s2 = math.fsum(slope * beta2)
    det = a_plus * a_minus - b * b
    return IdealIntermediates(
        a_plus=a_plus,
        a_minus=a_minus,
        b=b,
        f_term=f_term,
        delta1=a_plus * s1 ** 2 / det,
        delta2=-2.0 * b * s1 * s2 / det,
        delta3=a_minus * s2 ** 2 / det,
        s1=s1,
        s2=s2,
    )


def intermediates(scene: Scene, q_max: int) -> IdealIntermediates:
    """A+-, B, F, delta1..3 and S1, S2 for modes n, m <= q_max."""
    _, beta2, signs, slope = _mode_terms(scene, q_max)
    return _intermediates(scene, beta2, signs, slope)


def analytic_inverse(scene: Scene, q_max: int) -> np.ndarray:
    """Inverse ideal covariance on ideal_basis(scene, q_max)."""
    _, beta2, signs, slope = _mode_terms(scene, q_max)
    terms = _intermediates(scene, beta2, signs, slope)
    det = terms.determinant
    correction = (np.outer(signs, signs) * terms.a_plus
                  - terms.b * (signs[:, None] + signs[None, :])
                  + terms.a_minus) / det
    return np.diag(1.0 / (2.0 * scene.n_kappa * beta2)) - correction


def sensitivity_ideal(scene: Scene, q_max: int) -> float:
    """M = (2 N kappa / w^2) [F - 2 N kappa (delta1 + delta2 + delta3)]."""
    t = intermediates(scene, q_max)
    nk2 = 2.0 * scene.n_kappa
    return nk2 / scene.waist ** 2 * (t.f_term - nk2 * (t.delta1 + t.delta2 + t.delta3))


def _raw_coefficients(scene: Scene, q_max: int):
    basis, beta2, signs, slope = _mode_terms(scene, q_max)
    t = _intermediates(scene, beta2, signs, slope)
    nk2 = 2.0 * scene.n_kappa
    bracket = (signs * t.a_plus - t.b) * t.s1 - (signs * t.b - t.a_minus) * t.s2
    # w * (Gamma^{-1} D)_k
    return basis, slope - nk2 / t.determinant * bracket, t


def coefficients_ideal(scene: Scene, q_max: int) -> np.ndarray:
    """Unit-norm optimal coefficients on ideal_basis(scene, q_max)."""
    _, raw, _ = _raw_coefficients(scene, q_max)
    coeffs, _ = normalize_coefficients(raw)
    return coeffs


def ideal_result(scene: Scene, q_max: int) -> SensitivityResult:
    """Sensitivity, coefficients and eta from the closed forms."""
    _, raw, _ = _raw_coefficients(scene, q_max)
    coeffs, eta_w = normalize_coefficients(raw / scene.waist)
    return SensitivityResult(sensitivity_ideal(scene, q_max), coeffs, eta_w)


def sensitivity_asymptotic(scene: Scene) -> float:
    """Q -> infinity limit of the ideal sensitivity; independent of theta."""
    nk = scene.n_kappa
    g2 = scene.gamma ** 2
    x2 = scene.x ** 2
    decay = math.exp(-4.0 * x2)
    numerator = 4.0 * (1.0 - g2) * nk * decay * x2 * ((1.0 + g2) * nk + 1.0)
    denominator = (1.0 - g2 * g2) * nk * nk * (-math.expm1(-4.0 * x2)) + 2.0 * nk + 1.0
    return 2.0 * nk / scene.waist ** 2 * (1.0 - numerator / denominator)


def quantum_fisher_equal(scene: Scene) -> float:
    """Quantum Fisher information for equally bright thermal sources (gamma ignored)."""
    nk = scene.n_kappa
    x2 = scene.x ** 2
    decay = math.exp(-4.0 * x2)
    w2 = scene.waist ** 2
    return (2.0 * nk / w2
            - 8.0 * nk * nk * x2 * (nk + 1.0) * decay / (w2 * ((nk + 1.0) ** 2 - nk * nk * decay)))
