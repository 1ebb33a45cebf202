# mc_oracle.py
"""Monte Carlo photon counts for two thermal sources behind a demultiplexer.

Each sample draws the thermal field amplitudes, forms the coherent amplitude
alpha_k in every measured mode, draws Poisson(|alpha_k|^2) counts and adds
Bose-Einstein dark counts. Two independent samplers are available:

* "beta": amplitudes (beta_+, beta_-) of the orthonormalized symmetric and
  antisymmetric image modes, with <|beta_+-|^2> = N kappa (1 +- delta) and
  <beta_+ beta_-^*> = -gamma N kappa sqrt(1 - delta^2);
* "source": independent amplitudes of the two sources, with variances
  (1 - gamma) N kappa (image at +r0) and (1 + gamma) N kappa (image at -r0).

Standard errors come from batch means over independent seed streams.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import eigh

from superres_moments.demux_model import MomentData
from superres_moments.errors import DimensionMismatch, DomainError
from superres_moments.hg_overlap import overlap_delta, overlap_table
from superres_moments.noise import CrosstalkMatrix, DarkCounts, apply_crosstalk
from superres_moments.scene import ALIGNED, Misalignment, ModeBasis, Scene
from superres_moments.workers import parallel_map

logger = logging.getLogger(__name__)

MIN_SAMPLES = 1000
MAX_BATCHES = 100
SAMPLER_PATHS = ("beta", "source")


@dataclass(frozen=True)
class McConfig:
    samples: int = 1_000_000
    seed: Union[int, Sequence[int]] = 0
    path: str = "beta"

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < MIN_SAMPLES:
            raise DomainError(f"Monte Carlo needs at least {MIN_SAMPLES} samples, got {self.samples}")
        if self.path not in SAMPLER_PATHS:
            raise DomainError(f"Unknown sampler path '{self.path}', expected one of {SAMPLER_PATHS}")

    @property
    def batches(self) -> int:
        return max(1, min(MAX_BATCHES, int(self.samples) // 100))

    def batch_sizes(self) -> List[int]:
        base, extra = divmod(int(self.samples), self.batches)
        return [base + (1 if i < extra else 0) for i in range(self.batches)]


@dataclass(frozen=True)
class McEstimate:
    """Empirical moments with batch-means standard errors."""

    means: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    samples: int
    seed: Union[int, Sequence[int]]
    path: str
    deriv: Optional[np.ndarray] = None
    deriv_se: Optional[np.ndarray] = None
    basis: Optional[ModeBasis] = None

    @property
    def moment_data(self) -> MomentData:
        deriv = self.deriv if self.deriv is not None else np.zeros_like(self.means)
        return MomentData(self.means, self.cov, deriv, self.basis)

    def z_scores(self, moment_data: MomentData) -> Dict[str, np.ndarray]:
        """(empirical - analytic) / SE for means, covariance and, if sampled, derivative."""
        if moment_data.size != self.means.size:
            raise DimensionMismatch(
                f"Analytic moments have {moment_data.size} modes, estimate has {self.means.size}"
            )
        scores = {
            "means": _z(self.means, moment_data.means, self.mean_se, self.samples),
            "cov": _z(self.cov, moment_data.cov, self.cov_se, self.samples),
        }
        if self.deriv is not None:
            scores["deriv"] = _z(self.deriv, moment_data.deriv, self.deriv_se)
        return scores

    def max_abs_z(self, moment_data: MomentData) -> float:
        return max(float(np.max(np.abs(z))) for z in self.z_scores(moment_data).values())


def _z(empirical: np.ndarray, analytic: np.ndarray, se: np.ndarray,
       samples: Optional[int] = None) -> np.ndarray:
    diff = empirical - analytic
    if samples:
        # rare coincidences: a statistic that fires at rate |analytic| per sample
        # cannot have a standard error below sqrt(|analytic| / samples)
        se = np.maximum(se, np.sqrt(np.abs(analytic) / samples))
    # exact agreement with zero spread (e.g. modes that never click) scores 0
    scale = np.where(se > 0, se, 1.0)
    z = diff / scale
    return np.where((se > 0) | (np.abs(diff) == 0), z, np.inf)


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _hermitian_root(matrix: np.ndarray) -> np.ndarray:
    """L with L L^H = matrix for a PSD (possibly singular) Hermitian matrix."""
    values, vectors = eigh(matrix)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


class _Sampler:
    """Amplitude model shared by all batches of one run."""

    def __init__(self, scene: Scene, misalignment: Misalignment, ct: Optional[CrosstalkMatrix],
                 dark: Optional[DarkCounts], basis: ModeBasis, path: str):
        full = overlap_table(scene, misalignment, ModeBasis.full(basis.q_max))
        if ct is not None:
            if ct.dim != basis.full_size:
                raise DimensionMismatch(
                    f"Crosstalk of dim {ct.dim} does not match the Q={basis.q_max} basis"
                )
            full = apply_crosstalk(ct, full)
        table = full.select(basis)
        self.f_plus = table.f_plus.astype(complex)
        self.f_minus = table.f_minus.astype(complex)
        self.df_plus = table.df_plus.astype(complex)
        self.df_minus = table.df_minus.astype(complex)
        self.dark = dark
        self.dark_means = dark.for_basis(basis) if dark is not None else None
        self.path = path
        nk = scene.n_kappa
        gamma = scene.gamma
        # the source at +r0 carries (1 - gamma) N
        self.source_scale = np.sqrt(np.array([(1.0 - gamma) * nk, (1.0 + gamma) * nk]))
        delta = overlap_delta(scene)
        n_plus, n_minus = nk * (1.0 + delta), nk * (1.0 - delta)
        cross = -gamma * math.sqrt(n_plus * n_minus)
        self.beta_root = _hermitian_root(np.array([[n_plus, cross], [cross, n_minus]], dtype=complex))
        self.g_plus = (self.f_plus + self.f_minus) / math.sqrt(2.0 * (1.0 + delta))
        self.g_minus = ((self.f_plus - self.f_minus) / math.sqrt(2.0 * (1.0 - delta))
                        if delta < 1.0 else np.zeros_like(self.f_plus))

    def batch(self, rng: np.random.Generator, size: int):
        z = _complex_normal(rng, (size, 2))
        deriv = None
        if self.path == "beta":
            beta = z @ self.beta_root.T
            alpha = np.outer(beta[:, 0], self.g_plus) + np.outer(beta[:, 1], self.g_minus)
        else:
            sources = z * self.source_scale
            alpha = np.outer(sources[:, 0], self.f_plus) + np.outer(sources[:, 1], self.f_minus)
            # pathwise derivative: the source amplitudes do not depend on d
            dalpha = np.outer(sources[:, 0], self.df_plus) + np.outer(sources[:, 1], self.df_minus)
            deriv = 2.0 * np.real(np.conj(alpha) * dalpha)
        counts = rng.poisson(np.abs(alpha) ** 2).astype(float)
        if self.dark is not None:
            counts += self.dark.sample(rng, size, self.dark_means)
        return counts, deriv


def _batch_summary(sampler: _Sampler, seed_seq: np.random.SeedSequence, size: int):
    rng = np.random.default_rng(seed_seq)
    counts, deriv = sampler.batch(rng, size)
    mean = counts.mean(axis=0)
    centred = counts - mean
    scatter = centred.T @ centred
    dmean = deriv.mean(axis=0) if deriv is not None else None
    return size, mean, scatter, dmean


def sample_counts(scene: Scene, misalignment: Misalignment = ALIGNED, ct: Optional[CrosstalkMatrix] = None,
                  dark: Optional[DarkCounts] = None, basis: Optional[ModeBasis] = None,
                  mc: Optional[McConfig] = None, threads: int = 1) -> McEstimate:
    """Empirical means and covariance of the mode counts.

    Batch b uses SeedSequence(mc.seed).spawn(B)[b]; batches are merged in
    index order so the estimate does not depend on the thread count.
    """
    basis = ModeBasis.full(2) if basis is None else basis
    mc = McConfig() if mc is None else mc
    sampler = _Sampler(scene, misalignment, ct, dark, basis, mc.path)
    streams = np.random.SeedSequence(mc.seed).spawn(mc.batches)
    sizes = mc.batch_sizes()
    logger.info(f"Monte Carlo: {mc.samples} samples in {mc.batches} batches ({mc.path} path)")
    summaries = parallel_map(lambda job: _batch_summary(sampler, *job), list(zip(streams, sizes)), threads)

    # pairwise merge of batch means and scatter matrices, fixed order
    total, mean, scatter = 0, np.zeros(basis.size), np.zeros((basis.size, basis.size))
    batch_means, batch_covs, batch_derivs = [], [], []
    for size, b_mean, b_scatter, b_deriv in summaries:
        delta = b_mean - mean
        merged = total + size
        mean = mean + delta * size / merged
        scatter = scatter + b_scatter + np.outer(delta, delta) * total * size / merged
        total = merged
        batch_means.append(b_mean)
        batch_covs.append(b_scatter / (size - 1))
        if b_deriv is not None:
            batch_derivs.append(b_deriv)
    cov = scatter / (total - 1)
    root_b = math.sqrt(len(summaries))
    ddof = 1 if len(summaries) > 1 else 0
    mean_se = np.std(batch_means, axis=0, ddof=ddof) / root_b
    cov_se = np.std(batch_covs, axis=0, ddof=ddof) / root_b
    deriv = deriv_se = None
    if batch_derivs:
        weights = np.array(sizes, dtype=float) / total
        deriv = np.tensordot(weights, np.array(batch_derivs), axes=1)
        deriv_se = np.std(batch_derivs, axis=0, ddof=ddof) / root_b
    return McEstimate(mean, 0.5 * (cov + cov.T), mean_se, cov_se, int(total), mc.seed,
                      mc.path, deriv, deriv_se, basis)
