# noise.py
"""Noise sources of a demultiplexing measurement: crosstalk and dark counts.

Crosstalk is a unitary C(eps) = exp(-i eps sum_i lambda_i G_i) mixing the
(Q+1)^2 measured modes, with G_i the generalized Gell-Mann matrices and
random weights lambda_i. Its strength is reported as the mean off-diagonal
power (1 / K(K-1)) sum_{k != l} |c_kl|^2 and each sampled matrix is
calibrated to hit a requested value of it.

Dark counts are thermal (Bose-Einstein) counts with mean N_k^dc added to
every mode independently.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from superres_moments.errors import ConvergenceError, DimensionMismatch, DomainError
from superres_moments.hg_overlap import OverlapTable
from superres_moments.scene import ModeBasis, Scene

logger = logging.getLogger(__name__)

# Grid used to locate the monotone range of the off-diagonal power in eps.
CALIBRATION_GRID = 257
CALIBRATION_RTOL = 1e-6


def gell_mann_generators(dim: int) -> List[np.ndarray]:
    """Generalized Gell-Mann matrices of su(dim).

    Order: symmetric (j < k lexicographic), antisymmetric (same order),
    diagonal (ascending size of the traceless block). For dim = 2 this gives
    the Pauli matrices x, y, z. Normalized to Tr(G_i G_j) = 2 delta_ij.
    """
    if int(dim) != dim or dim < 2:
        raise DomainError(f"Gell-Mann generators need dim >= 2, got {dim}")
    dim = int(dim)
    generators = []
    for j in range(dim):
        for k in range(j + 1, dim):
            mx = np.zeros((dim, dim), dtype=complex)
            mx[j, k] = mx[k, j] = 1.0
            generators.append(mx)
    for j in range(dim):
        for k in range(j + 1, dim):
            mx = np.zeros((dim, dim), dtype=complex)
            mx[j, k] = -1.0j
            mx[k, j] = 1.0j
            generators.append(mx)
    for level in range(1, dim):
        diag = np.zeros(dim)
        diag[:level] = 1.0
        diag[level] = -level
        generators.append(np.diag(diag * np.sqrt(2.0 / (level * (level + 1)))).astype(complex))
    return generators


def offdiag_power(matrix: np.ndarray) -> float:
    """Mean of |c_kl|^2 over the K(K-1) off-diagonal entries."""
    matrix = np.asarray(matrix)
    dim = matrix.shape[0]
    power = np.abs(matrix) ** 2
    return float((power.sum() - np.trace(power)) / (dim * (dim - 1)))


@dataclass(frozen=True)
class CrosstalkMatrix:
    """A K x K crosstalk unitary and the generator strength that produced it."""

    entries: np.ndarray
    epsilon: float = 0.0
    seed: Optional[Sequence[int]] = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def mean_offdiag_power(self) -> float:
        return offdiag_power(self.entries)

    @property
    def unitarity_defect(self) -> float:
        return float(np.max(np.abs(self.entries @ self.entries.conj().T - np.eye(self.dim))))

    @property
    def is_identity(self) -> bool:
        return self.epsilon == 0.0 and np.array_equal(self.entries, np.eye(self.dim))

    @classmethod
    def identity(cls, dim: int) -> "CrosstalkMatrix":
        return cls(np.eye(dim, dtype=complex), 0.0)

    def element(self, row, col, q_max: int) -> complex:
        """c_{row,col} with modes given as (n, m) pairs of the Q = q_max layout."""
        size = q_max + 1
        if self.dim != size * size:
            raise DimensionMismatch(f"Crosstalk of dim {self.dim} does not match Q={q_max}")
        return complex(self.entries[row[0] * size + row[1], col[0] * size + col[1]])


def _random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Hermitian generator sum_i lambda_i G_i with uniform weights, sum lambda_i^2 = 1."""
    generators = gell_mann_generators(dim)
    weights = rng.uniform(0.0, 1.0, size=len(generators))
    weights /= np.linalg.norm(weights)
    return np.tensordot(weights, np.array(generators), axes=1)


def _exponential(eigvals: np.ndarray, eigvecs: np.ndarray, eps: float) -> np.ndarray:
    return (eigvecs * np.exp(-1.0j * eps * eigvals)) @ eigvecs.conj().T


def calibrate_strength(generator: np.ndarray, target: float) -> float:
    """Find eps >= 0 with offdiag_power(exp(-i eps generator)) == target.

    The power is only searched for on its first monotone branch; a target
    above the branch maximum raises ConvergenceError.
    """
    eigvals, eigvecs = eigh(generator)
    spread = float(eigvals[-1] - eigvals[0])
    if spread <= 0:
        raise ConvergenceError("Crosstalk generator has a degenerate spectrum")
    grid = np.linspace(0.0, np.pi / spread, CALIBRATION_GRID)
    powers = np.array([offdiag_power(_exponential(eigvals, eigvecs, eps)) for eps in grid])
    falling = np.nonzero(np.diff(powers) <= 0)[0]
    top = falling[0] if falling.size else len(grid) - 1
    if target > powers[top]:
        raise ConvergenceError(
            f"Crosstalk power {target} exceeds the monotone maximum {powers[top]:.6g} "
            f"of this generator"
        )
    above = int(np.argmax(powers[: top + 1] >= target))
    lo, hi = grid[max(above - 1, 0)], grid[above]
    if powers[above] == target:
        return float(hi)

    def residual(eps):
        return offdiag_power(_exponential(eigvals, eigvecs, eps)) - target

    eps, info = brentq(residual, lo, hi, xtol=1e-300, rtol=1e-14, full_output=True)
    if not info.converged:
        raise ConvergenceError(f"Crosstalk calibration did not converge: {info.flag}")
    realized = residual(eps) + target
    if abs(realized - target) > CALIBRATION_RTOL * target:
        raise ConvergenceError(
            f"Calibrated crosstalk power {realized} misses target {target}"
        )
    return float(eps)


def sample_crosstalk(dim: int, target_offdiag_power: float, seed) -> CrosstalkMatrix:
    """Random crosstalk unitary calibrated to the requested off-diagonal power.

    `seed` is anything numpy.random.default_rng accepts; the same seed gives
    the same matrix.
    """
    if int(dim) != dim or dim < 2:
        raise DomainError(f"Crosstalk needs dim >= 2, got {dim}")
    if not 0.0 <= target_offdiag_power < 1.0:
        raise DomainError(f"Crosstalk power must lie in [0, 1), got {target_offdiag_power}")
    seed_list = list(np.atleast_1d(seed).astype(int)) if seed is not None else None
    if target_offdiag_power == 0.0:
        return CrosstalkMatrix(np.eye(dim, dtype=complex), 0.0, seed_list)
    rng = np.random.default_rng(seed)
    generator = _random_direction(int(dim), rng)
    eps = calibrate_strength(generator, target_offdiag_power)
    eigvals, eigvecs = eigh(generator)
    entries = _exponential(eigvals, eigvecs, eps)
    logger.debug(f"Sampled crosstalk dim={dim} seed={seed_list} eps={eps:.6g}")
    return CrosstalkMatrix(entries, eps, seed_list)


def member_seed(base_seed: int, member: int) -> List[int]:
    """Seed of ensemble member `member`: the entropy pair [base_seed, member]."""
    return [int(base_seed), int(member)]


def crosstalk_ensemble(dim: int, target_offdiag_power: float, base_seed: int,
                       count: int) -> List[CrosstalkMatrix]:
    if count < 1:
        raise DomainError(f"Ensemble needs at least one member, got {count}")
    logger.info(f"Sampling {count} crosstalk matrices (dim={dim}, power={target_offdiag_power})")
    return [sample_crosstalk(dim, target_offdiag_power, member_seed(base_seed, i))
            for i in range(count)]


def apply_crosstalk(ct: CrosstalkMatrix, table: OverlapTable) -> OverlapTable:
    """Mix a full-basis overlap table with the crosstalk matrix.

    f_{+-,k} -> sum_l c_kl f_{+-,l}; the derivatives transform the same way.
    """
    if not table.basis.is_full or ct.dim != table.basis.full_size:
        raise DimensionMismatch(
            f"Crosstalk of dim {ct.dim} needs a full table of {ct.dim} modes, "
            f"got {table.basis.size} of {table.basis.full_size}"
        )
    c = ct.entries
    return OverlapTable(
        table.basis,
        c @ table.f_plus.astype(complex),
        c @ table.f_minus.astype(complex),
        c @ table.df_plus.astype(complex),
        c @ table.df_minus.astype(complex),
    )


@dataclass(frozen=True)
class DarkCounts:
    """Per-mode dark-count means N_k^dc, laid out like the full mode basis."""

    per_mode_mean: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.per_mode_mean, dtype=float).reshape(-1)
        if np.any(means < 0) or not np.all(np.isfinite(means)):
            raise DomainError(f"Dark-count means must be finite and non-negative, got {means}")
        object.__setattr__(self, "per_mode_mean", means)

    @classmethod
    def uniform(cls, level: float, dim: int) -> "DarkCounts":
        return cls(np.full(dim, float(level)))

    @classmethod
    def from_sigma(cls, sigma: float, scene: Scene, dim: int) -> "DarkCounts":
        """Uniform dark counts with N^dc = sigma * 2 N kappa."""
        return cls.uniform(sigma * 2.0 * scene.n_kappa, dim)

    @property
    def dim(self) -> int:
        return self.per_mode_mean.size

    @property
    def variance(self) -> np.ndarray:
        """Bose-Einstein variance N^dc (N^dc + 1)."""
        return self.per_mode_mean * (self.per_mode_mean + 1.0)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.per_mode_mean)

    def sigma(self, scene: Scene) -> np.ndarray:
        return self.per_mode_mean / (2.0 * scene.n_kappa)

    def for_basis(self, basis: ModeBasis) -> np.ndarray:
        """Means for the active modes; accepts full-layout or active-layout vectors."""
        if self.dim == basis.full_size:
            return self.per_mode_mean[basis.positions]
        if self.dim == basis.size:
            return self.per_mode_mean
        raise DimensionMismatch(
            f"Dark counts of length {self.dim} fit neither the full basis "
            f"({basis.full_size}) nor the active one ({basis.size})"
        )

    def sample(self, rng: np.random.Generator, size: int, means: Optional[np.ndarray] = None) -> np.ndarray:
        """Geometric (Bose-Einstein) counts, shape (size, K)."""
        means = self.per_mode_mean if means is None else means
        return rng.geometric(1.0 / (1.0 + means), size=(size, means.size)) - 1


@dataclass(frozen=True)
class NoiseModel:
    """Crosstalk and dark counts applied together; either may be absent."""

    crosstalk: Optional[CrosstalkMatrix] = None
    dark: Optional[DarkCounts] = None

    @property
    def has_crosstalk(self) -> bool:
        return self.crosstalk is not None and not self.crosstalk.is_identity

    @property
    def has_dark_counts(self) -> bool:
        return self.dark is not None and not self.dark.is_zero

    @property
    def is_noiseless(self) -> bool:
        return not (self.has_crosstalk or self.has_dark_counts)

    def with_crosstalk(self, crosstalk: Optional[CrosstalkMatrix]) -> "NoiseModel":
        return NoiseModel(crosstalk, self.dark)


NOISELESS = NoiseModel()
