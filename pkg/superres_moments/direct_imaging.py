# direct_imaging.py
"""Pixelized direct imaging of two thermal sources.

Per pixel, Phi is the fraction of the image of the source at -r0 falling on
the pixel, Psi the same for the source at +r0 and Xi the pixel integral of
the product of the two displaced PSF amplitudes. The mean counts are

    I = N kappa (1 + gamma) Phi + N kappa (1 - gamma) Psi

and the covariance is diag(I) + U U^T with three columns in U, so its
inverse is a 3 x 3 Woodbury update. With U and D whitened by I^{-1/2},

    M = |D~|^2 - D~^T U~ (1 + U~^T U~)^{-1} U~^T D~.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import erf

from superres_moments.demux_model import COVARIANCE_FORMS, MomentData
from superres_moments.errors import DomainError, SingularCore
from superres_moments.moments_engine import SensitivityResult, normalize_coefficients
from superres_moments.scene import Scene, exact_cos_sin

logger = logging.getLogger(__name__)

# Pixels with fewer mean photons are left out of the solve.
INTENSITY_FLOOR = 1e-30
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PixelGrid:
    """Square detector of side 2 * half_side (in units of w) cut into n_p x n_p pixels."""

    n_p: int = 50
    half_side: float = 3.0

    def __post_init__(self):
        if int(self.n_p) != self.n_p or self.n_p < 1:
            raise DomainError(f"n_p must be a positive integer, got {self.n_p}")
        if not self.half_side > 0:
            raise DomainError(f"Detector half side must be positive, got {self.half_side}")

    @property
    def edges(self) -> np.ndarray:
        """Pixel edges along one axis, in units of w."""
        return np.linspace(-self.half_side, self.half_side, int(self.n_p) + 1)

    @property
    def centers(self) -> np.ndarray:
        edges = self.edges
        return 0.5 * (edges[1:] + edges[:-1])

    @property
    def half_sizes(self) -> np.ndarray:
        return 0.5 * np.diff(self.edges)

    @property
    def pixel_area(self) -> float:
        return (2.0 * self.half_side / self.n_p) ** 2


@dataclass(frozen=True)
class DirectImagingMoments:
    """Per-pixel overlaps, intensities and the low-rank covariance factor.

    2D arrays are indexed [x pixel, y pixel]; flattened vectors use the same
    row-major order.
    """

    grid: PixelGrid
    scene: Scene
    phi: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    dphi: np.ndarray
    dpsi: np.ndarray
    covariance_form: str = "complete"

    @property
    def intensities(self) -> np.ndarray:
        nk, g = self.scene.n_kappa, self.scene.gamma
        return nk * (1.0 + g) * self.phi + nk * (1.0 - g) * self.psi

    @property
    def deriv(self) -> np.ndarray:
        nk, g = self.scene.n_kappa, self.scene.gamma
        return nk * (1.0 + g) * self.dphi + nk * (1.0 - g) * self.dpsi

    @property
    def lowrank_u(self) -> np.ndarray:
        """N_p^2 x 3 factor with covariance = diag(I) + U U^T."""
        nk, g = self.scene.n_kappa, self.scene.gamma
        if self.covariance_form == "complete":
            a, b = 1.0 + g, 1.0 - g
        else:
            a = b = math.sqrt(1.0 + g * g)
        c = math.sqrt(2.0 * (1.0 - g * g))
        return nk * np.column_stack([a * self.phi.ravel(), b * self.psi.ravel(), c * self.xi.ravel()])

    def kept(self, floor: float = INTENSITY_FLOOR) -> np.ndarray:
        return self.intensities.ravel() > floor

    def dense_moments(self, floor: float = INTENSITY_FLOOR) -> MomentData:
        """Explicit pixel covariance Gamma0 + gamma Gamma1 + gamma^2 Gamma2 (small grids only)."""
        nk, g = self.scene.n_kappa, self.scene.gamma
        phi, psi, xi = self.phi.ravel(), self.psi.ravel(), self.xi.ravel()
        pp = np.outer(phi, phi)
        ss = np.outer(psi, psi)
        xx = np.outer(xi, xi)
        gamma0 = nk * nk * (pp + ss + 2.0 * xx) + np.diag(nk * (phi + psi))
        gamma1 = np.diag(nk * (phi - psi))
        if self.covariance_form == "complete":
            gamma1 = gamma1 + 2.0 * nk * nk * (pp - ss)
        gamma2 = nk * nk * (pp + ss - 2.0 * xx)
        cov = gamma0 + g * gamma1 + g * g * gamma2
        keep = self.kept(floor)
        return MomentData(
            self.intensities.ravel()[keep],
            cov[np.ix_(keep, keep)],
            self.deriv.ravel()[keep],
        )


def _segment_mass(edges: np.ndarray, center: float) -> np.ndarray:
    """Fraction of a 1D PSF intensity centred at `center` on each segment."""
    return 0.5 * np.diff(erf(SQRT2 * (edges - center)))


def _segment_slope(edges: np.ndarray, center: float) -> np.ndarray:
    """Derivative of _segment_mass with respect to the centre."""
    return -math.sqrt(2.0 / math.pi) * np.diff(np.exp(-2.0 * (edges - center) ** 2))


def pixel_overlaps(scene: Scene, grid: PixelGrid = PixelGrid(),
                   covariance_form: str = "complete") -> DirectImagingMoments:
    """Phi, Psi, Xi and the d-derivatives of Phi and Psi on every pixel."""
    if covariance_form not in COVARIANCE_FORMS:
        raise DomainError(f"Unknown covariance form '{covariance_form}', expected one of {COVARIANCE_FORMS}")
    edges = grid.edges
    c, s = exact_cos_sin(scene.theta)
    rx, ry = scene.x * c, scene.x * s
    # d r0 / d d in units of w per unit length
    kx, ky = c / (2.0 * scene.waist), s / (2.0 * scene.waist)

    images = {}
    for sign in (-1.0, 1.0):
        mx, my = _segment_mass(edges, sign * rx), _segment_mass(edges, sign * ry)
        sx, sy = _segment_slope(edges, sign * rx), _segment_slope(edges, sign * ry)
        mass = np.outer(mx, my)
        slope = sign * (kx * np.outer(sx, my) + ky * np.outer(mx, sy))
        images[sign] = (mass, slope)
    phi, dphi = images[-1.0]
    psi, dpsi = images[1.0]
    centred = _segment_mass(edges, 0.0)
    xi = math.exp(-2.0 * scene.x ** 2) * np.outer(centred, centred)
    return DirectImagingMoments(grid, scene, phi, psi, xi, dphi, dpsi, covariance_form)


def _whitened(moments: DirectImagingMoments, floor: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    keep = moments.kept(floor)
    intensities = moments.intensities.ravel()[keep]
    root = np.sqrt(intensities)
    deriv = moments.deriv.ravel()[keep]
    u = moments.lowrank_u[keep]
    return keep, intensities, deriv / root, u / root[:, None]


def first_term(scene: Scene, grid: PixelGrid = PixelGrid(), floor: float = INTENSITY_FLOOR) -> float:
    """sum_p (dI_p/dd)^2 / I_p, the Poissonian part of the sensitivity."""
    _, _, d_tilde, _ = _whitened(pixel_overlaps(scene, grid), floor)
    return float(d_tilde @ d_tilde)


def di_sensitivity(scene: Scene, grid: PixelGrid = PixelGrid(), covariance_form: str = "complete",
                   floor: float = INTENSITY_FLOOR) -> SensitivityResult:
    """Optimal linear-observable sensitivity of pixelized direct imaging.

    Coefficients are returned for every pixel (row-major), zero where the
    pixel was dropped for falling below `floor`.
    """
    moments = pixel_overlaps(scene, grid, covariance_form)
    keep, intensities, d_tilde, u_tilde = _whitened(moments, floor)
    core = np.eye(3) + u_tilde.T @ u_tilde
    try:
        factor = cho_factor(core)
    except LinAlgError as exc:
        raise SingularCore(f"Woodbury core 1 + U^T U is not invertible: {exc}") from exc
    projection = u_tilde.T @ d_tilde
    correction = cho_solve(factor, projection)
    m_value = max(float(d_tilde @ d_tilde - projection @ correction), 0.0)

    # Gamma^{-1} D = D / I - (U / I) core^{-1} U~^T D~
    deriv = moments.deriv.ravel()[keep]
    weights = deriv / intensities - (moments.lowrank_u[keep] / intensities[:, None]) @ correction
    full = np.zeros(moments.grid.n_p ** 2)
    full[keep] = weights
    coeffs, eta = normalize_coefficients(full)
    condition = float(np.linalg.cond(core))
    logger.debug(f"Direct imaging M={m_value:.6g} on {int(keep.sum())} pixels")
    return SensitivityResult(m_value, coeffs, eta, condition)


def di_small_separation(scene: Scene) -> float:
    """Small-separation expansion (2 N kappa / w^2)(gamma^2 + 4 x^2 (2 - 5 gamma^2 + 3 gamma^4))."""
    g2 = scene.gamma ** 2
    x2 = scene.x ** 2
    return 2.0 * scene.n_kappa / scene.waist ** 2 * (g2 + 4.0 * x2 * (2.0 - 5.0 * g2 + 3.0 * g2 * g2))
