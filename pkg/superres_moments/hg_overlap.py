# hg_overlap.py
"""Overlaps of the displaced Gaussian PSF with Hermite-Gauss modes.

For a displacement a (in units of the waist w) the overlap of the PSF image
centred at a with the HG mode u_nm is

    beta_nm(a) = exp(-|a|^2 / 2) * a_x^n * a_y^m / sqrt(n! m!)

The overlap functions of the two source images are
f_{+,k} = beta_k(+r0 - r_s) and f_{-,k} = beta_k(-r0 - r_s).
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import factorial

from superres_moments.errors import DimensionMismatch
from superres_moments.scene import ALIGNED, Misalignment, ModeBasis, Scene, exact_cos_sin


@dataclass(frozen=True)
class OverlapTable:
    """f_{+,k}, f_{-,k} and their d-derivatives for every active mode.

    Arrays are real until crosstalk is applied, complex afterwards.
    """

    basis: ModeBasis
    f_plus: np.ndarray
    f_minus: np.ndarray
    df_plus: np.ndarray
    df_minus: np.ndarray

    def __post_init__(self):
        size = self.basis.size
        for name in ("f_plus", "f_minus", "df_plus", "df_minus"):
            if getattr(self, name).shape != (size,):
                raise DimensionMismatch(
                    f"{name} has shape {getattr(self, name).shape}, basis has {size} modes"
                )

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.f_plus)

    def select(self, basis: ModeBasis) -> "OverlapTable":
        """Restrict a full-basis table to the modes of `basis`."""
        if basis.q_max != self.basis.q_max or not self.basis.is_full:
            raise DimensionMismatch(
                f"Can only select from a full Q={basis.q_max} table, got Q={self.basis.q_max} "
                f"with {self.basis.size} modes"
            )
        idx = basis.positions
        return OverlapTable(basis, self.f_plus[idx], self.f_minus[idx],
                            self.df_plus[idx], self.df_minus[idx])


def overlap_delta(scene: Scene) -> float:
    """Overlap between the two source images, exp(-d^2 / 2w^2)."""
    return math.exp(-2.0 * scene.x ** 2)


def _indices(basis: ModeBasis) -> Tuple[np.ndarray, np.ndarray]:
    pairs = np.array(basis.active, dtype=int).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def _norm(n: np.ndarray, m: np.ndarray) -> np.ndarray:
    return 1.0 / np.sqrt(factorial(n, exact=False) * factorial(m, exact=False))


def beta_at(n, m, ax: float, ay: float) -> np.ndarray:
    """beta_nm at the displacement (ax, ay), given in units of w."""
    n = np.asarray(n, dtype=int)
    m = np.asarray(m, dtype=int)
    gauss = math.exp(-0.5 * (ax * ax + ay * ay))
    return _norm(n, m) * gauss * np.power(ax, n) * np.power(ay, m)


def beta_derivative_at(n, m, ax: float, ay: float, dax: float, day: float) -> np.ndarray:
    """d beta_nm / d(param) given the displacement and its derivative.

    Product rule on monomial x Gaussian; the n = 0 and m = 0 terms are
    dropped explicitly so that zero displacements never give 0 * inf.
    """
    n = np.asarray(n, dtype=int)
    m = np.asarray(m, dtype=int)
    gauss = math.exp(-0.5 * (ax * ax + ay * ay))
    px = np.power(ax, n)
    py = np.power(ay, m)
    dpx = np.where(n > 0, n * np.power(ax, np.maximum(n - 1, 0)), 0.0)
    dpy = np.where(m > 0, m * np.power(ay, np.maximum(m - 1, 0)), 0.0)
    radial = ax * dax + ay * day
    return _norm(n, m) * gauss * (dpx * py * dax + px * dpy * day - radial * px * py)


def _displacement(scene: Scene, misalignment: Misalignment, sign: int):
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    c, s = exact_cos_sin(scene.theta)
    rsx, rsy = misalignment.shift(scene.waist)
    ax = sign * scene.x * c - rsx
    ay = sign * scene.x * s - rsy
    # dr0/dd in units of w per unit length
    scale = 1.0 / (2.0 * scene.waist)
    return ax, ay, sign * c * scale, sign * s * scale


def beta(n: int, m: int, scene: Scene, misalignment: Misalignment = ALIGNED, sign: int = 1) -> float:
    """beta_nm(sign * r0 - r_s) for a single mode."""
    ax, ay, _, _ = _displacement(scene, misalignment, sign)
    return float(beta_at(n, m, ax, ay))


def beta_derivative(n: int, m: int, scene: Scene, misalignment: Misalignment = ALIGNED,
                    sign: int = 1) -> float:
    """d/dd of beta_nm(sign * r0 - r_s)."""
    ax, ay, dax, day = _displacement(scene, misalignment, sign)
    return float(beta_derivative_at(n, m, ax, ay, dax, day))


def overlap_table(scene: Scene, misalignment: Misalignment = ALIGNED,
                  basis: Optional[ModeBasis] = None) -> OverlapTable:
    """Overlap functions f_{+-,k} and their analytic d-derivatives."""
    if basis is None:
        basis = ModeBasis.full(0)
    n, m = _indices(basis)
    columns = []
    for sign in (1, -1):
        ax, ay, dax, day = _displacement(scene, misalignment, sign)
        columns.append((beta_at(n, m, ax, ay), beta_derivative_at(n, m, ax, ay, dax, day)))
    (fp, dfp), (fm, dfm) = columns
    return OverlapTable(basis, fp.astype(float), fm.astype(float), dfp.astype(float), dfm.astype(float))
