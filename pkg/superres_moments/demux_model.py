# demux_model.py
"""Photon-count moments of a noisy Hermite-Gauss demultiplexer.

For two incoherent thermal sources the mean counts, count covariance and
mean derivative in mode k are

    N_k   = N kappa (|f+|^2 + |f-|^2) - gamma N kappa (|f+|^2 - |f-|^2) + N_k^dc
    Gamma = Gamma0 + gamma Gamma1 + gamma^2 Gamma2 + diag(N^dc (N^dc + 1))
    D_k   = dN_k / dd

The covariance comes in two forms. "complete" (default) is the exact Gaussian
moment |E_kl|^2 + delta_kl N_k with E = N kappa [(1 - gamma) f+ f+^H +
(1 + gamma) f- f-^H]. "printed" drops the off-diagonal gamma-linear term and
pairs f- f+ without conjugation in the gamma^2 term; the two coincide
whenever the overlaps are real with |f+| = |f-| (aligned, no crosstalk).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from superres_moments.errors import DegenerateScene, DimensionMismatch, DomainError
from superres_moments.hg_overlap import OverlapTable, overlap_table
from superres_moments.noise import CrosstalkMatrix, DarkCounts, NoiseModel, apply_crosstalk
from superres_moments.scene import ALIGNED, Misalignment, ModeBasis, Scene, axis_alignment

logger = logging.getLogger(__name__)

COVARIANCE_FORMS = ("complete", "printed")


@dataclass(frozen=True)
class MomentData:
    """Means, covariance and d-derivative of a set of photon counts."""

    means: np.ndarray
    cov: np.ndarray
    deriv: np.ndarray
    basis: Optional[ModeBasis] = None
    dark: Optional[np.ndarray] = None
    mixed: bool = False
    shift_angle: Optional[float] = None

    def __post_init__(self):
        size = self.means.shape[0]
        if self.cov.shape != (size, size) or self.deriv.shape != (size,):
            raise DimensionMismatch(
                f"means {self.means.shape}, cov {self.cov.shape} and deriv {self.deriv.shape} disagree"
            )
        if self.basis is not None and self.basis.size != size:
            raise DimensionMismatch(f"Basis has {self.basis.size} modes, moments have {size}")

    @property
    def size(self) -> int:
        return self.means.shape[0]

    def restrict(self, keep: Sequence[int]) -> "MomentData":
        keep = np.asarray(keep, dtype=int)
        return MomentData(
            self.means[keep],
            self.cov[np.ix_(keep, keep)],
            self.deriv[keep],
            self.basis.restrict(keep) if self.basis is not None else None,
            self.dark[keep] if self.dark is not None else None,
            self.mixed,
            self.shift_angle,
        )


def _covariance(fp: np.ndarray, fm: np.ndarray, nk: float, gamma: float, form: str) -> np.ndarray:
    plus = np.abs(fp) ** 2
    minus = np.abs(fm) ** 2
    cross = fm * np.conj(fp)
    gamma0 = nk ** 2 * (np.outer(minus, minus) + np.outer(plus, plus)
                        + 2.0 * np.real(np.outer(cross, np.conj(cross))))
    gamma0 += np.diag(nk * (plus + minus))
    gamma1 = -np.diag(nk * (plus - minus))
    if form == "complete":
        gamma1 = gamma1 + 2.0 * nk ** 2 * (np.outer(minus, minus) - np.outer(plus, plus))
        pair = cross
    else:
        pair = fm * fp
    gamma2 = nk ** 2 * (np.outer(minus, minus) + np.outer(plus, plus)
                        - 2.0 * np.real(np.outer(pair, np.conj(pair))))
    cov = gamma0 + gamma * gamma1 + gamma ** 2 * gamma2
    return 0.5 * (cov + cov.T)


def moments_from_table(table: OverlapTable, scene: Scene, dark_means: Optional[np.ndarray] = None,
                       covariance_form: str = "complete", mixed: bool = False,
                       shift_angle: Optional[float] = None) -> MomentData:
    """Assemble MomentData from an overlap table (complex or real)."""
    if covariance_form not in COVARIANCE_FORMS:
        raise DomainError(f"Unknown covariance form '{covariance_form}', expected one of {COVARIANCE_FORMS}")
    nk = scene.n_kappa
    gamma = scene.gamma
    fp, fm = table.f_plus, table.f_minus
    plus = np.abs(fp) ** 2
    minus = np.abs(fm) ** 2
    dark = np.zeros(table.basis.size) if dark_means is None else np.asarray(dark_means, dtype=float)
    if dark.shape != (table.basis.size,):
        raise DimensionMismatch(f"Dark counts of shape {dark.shape} for {table.basis.size} modes")

    means = nk * (plus + minus) - gamma * nk * (plus - minus) + dark
    cov = _covariance(fp, fm, nk, gamma, covariance_form) + np.diag(dark * (dark + 1.0))
    dplus = np.real(np.conj(fp) * table.df_plus)
    dminus = np.real(np.conj(fm) * table.df_minus)
    deriv = 2.0 * nk * ((dplus + dminus) - gamma * (dplus - dminus))
    return MomentData(means, cov, deriv, table.basis, dark, mixed, shift_angle)


def demux_moments(scene: Scene, misalignment: Misalignment = ALIGNED,
                  ct: Optional[CrosstalkMatrix] = None, dark: Optional[DarkCounts] = None,
                  basis: Optional[ModeBasis] = None,
                  covariance_form: str = "complete") -> MomentData:
    """Means, covariance and derivative for demultiplexing into `basis`.

    Crosstalk acts on the full (Q+1)^2 layout before the active modes are
    selected, so ct.dim must equal (basis.q_max + 1)^2.
    """
    basis = ModeBasis.full(2) if basis is None else basis
    full = overlap_table(scene, misalignment, ModeBasis.full(basis.q_max))
    mixed = ct is not None and not ct.is_identity
    if ct is not None:
        if ct.dim != basis.full_size:
            raise DimensionMismatch(
                f"Crosstalk of dim {ct.dim} does not match the Q={basis.q_max} basis "
                f"of {basis.full_size} modes"
            )
        if mixed:
            full = apply_crosstalk(ct, full)
    table = full.select(basis)
    dark_means = dark.for_basis(basis) if dark is not None else None
    return moments_from_table(table, scene, dark_means, covariance_form,
                              mixed=mixed,
                              shift_angle=None if misalignment.is_aligned else misalignment.theta_s)


def demux_moments_with(scene: Scene, misalignment: Misalignment, noise: NoiseModel,
                       basis: ModeBasis, covariance_form: str = "complete") -> MomentData:
    return demux_moments(scene, misalignment, noise.crosstalk, noise.dark, basis, covariance_form)


def reduce_degenerate(moment_data: MomentData, scene: Scene) -> MomentData:
    """Drop modes whose mean and derivative vanish identically.

    Applies without crosstalk when r0 and the centroid shift r_s lie on the
    same axis (d_s = 0, or theta_s = theta mod pi with theta on an axis). On
    the x axis only u_n0 carry signal, on the y axis only u_0m; modes
    carrying dark counts are kept. Zero separation without a shift has no
    signal at all and raises DegenerateScene.
    """
    md = moment_data
    if md.mixed or md.basis is None:
        return md
    shifted = md.shift_angle is not None
    dark = md.dark if md.dark is not None else np.zeros(md.size)
    if scene.d == 0.0 and not shifted:
        if np.any(dark > 0):
            return md
        raise DegenerateScene("Zero separation: the two sources coincide and d is not identifiable")
    axis = axis_alignment(scene.theta)
    if not axis or (shifted and axis_alignment(md.shift_angle) != axis):
        return md
    keep = [i for i, (n, m) in enumerate(md.basis.active)
            if (m == 0 if axis == "x" else n == 0) or dark[i] > 0]
    if not keep:
        raise DegenerateScene(f"No measured mode carries signal along the {axis} axis")
    if len(keep) < md.size:
        logger.debug(f"Reduced {md.size} modes to {len(keep)} along the {axis} axis")
        return md.restrict(keep)
    return md


def prepared_moments(scene: Scene, misalignment: Misalignment = ALIGNED,
                     noise: Optional[NoiseModel] = None, basis: Optional[ModeBasis] = None,
                     covariance_form: str = "complete") -> MomentData:
    """demux_moments followed by reduce_degenerate."""
    noise = NoiseModel() if noise is None else noise
    md = demux_moments(scene, misalignment, noise.crosstalk, noise.dark, basis, covariance_form)
    return reduce_degenerate(md, scene)
