# asymptotics.py
"""Small-separation sensitivities and the minimal resolvable distance.

Noise regimes (equal brightness unless stated otherwise):

* low-brightness-diag: sum_k D_k^2 / N'_k, any gamma;
* dc-dominated: dark counts dominate, crosstalk only through c_00,00,
  c_01,01 and c_10,10;
* ct-dominated: crosstalk and dark counts of the same order;
* uniform-dc / uniform-ct: the two previous forms for a uniform crosstalk
  matrix with off-diagonal power |r|^2;
* misalignment-only: a centroid shift with no crosstalk or dark counts.

The minimal resolvable distance is the smallest d with d sqrt(mu M(d)) = 1.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from superres_moments.demux_model import demux_moments, prepared_moments
from superres_moments.direct_imaging import PixelGrid, di_sensitivity
from superres_moments.errors import DomainError, NoCrossing
from superres_moments.ideal_closed_form import sensitivity_asymptotic, sensitivity_ideal
from superres_moments.moments_engine import sensitivity
from superres_moments.noise import CrosstalkMatrix, NoiseModel, crosstalk_ensemble
from superres_moments.scene import ALIGNED, Misalignment, ModeBasis, Scene, exact_cos_sin
from superres_moments.workers import parallel_map

logger = logging.getLogger(__name__)

REGIMES = (
    "low-brightness-diag",
    "dc-dominated",
    "ct-dominated",
    "uniform-dc",
    "uniform-ct",
    "misalignment-only",
)
DMIN_METHODS = ("demux-exact", "demux-ideal-closed", "demux-asymptotic", "direct-imaging")
CLOSED_FORM_REGIMES = (
    "ideal",
    "misalignment",
    "crosstalk",
    "dark-counts",
    "dark-counts-large-n",
    "direct-imaging",
)
CLOSED_FORM_VARIANTS = ("printed", "derived")
# Relative gap between printed and derived d_min above which a warning is logged.
VARIANT_TOLERANCE = 0.01


def _uniform_sigma(scene: Scene, noise: NoiseModel) -> float:
    if noise.dark is None:
        return 0.0
    means = noise.dark.per_mode_mean
    if np.ptp(means) > 0:
        raise DomainError("Small-separation forms assume the same dark-count level in every mode")
    return float(means[0]) / (2.0 * scene.n_kappa)


def _low_order_entries(noise: NoiseModel):
    """|c_00,00|^2, |c_01,01|^2, |c_10,10|^2, |c_01,00|^2, |c_10,00|^2."""
    ct = noise.crosstalk
    if ct is None:
        return 1.0, 1.0, 1.0, 0.0, 0.0
    q_max = int(round(math.sqrt(ct.dim))) - 1
    if q_max < 1:
        raise DomainError("Crosstalk must act on at least the first-order modes (Q >= 1)")

    def power(row, col):
        return abs(ct.element(row, col, q_max)) ** 2

    return (power((0, 0), (0, 0)), power((0, 1), (0, 1)), power((1, 0), (1, 0)),
            power((0, 1), (0, 0)), power((1, 0), (0, 0)))


def _ratio(numerator: float, denominator: float, regime: str) -> float:
    if numerator == 0.0:
        return 0.0
    if denominator <= 0.0:
        raise DomainError(f"The {regime} expansion diverges for these noise levels")
    return numerator / denominator


def quadratic_coefficient(regime: str, scene: Scene, misalignment: Misalignment = ALIGNED,
                          noise: Optional[NoiseModel] = None, ct_power: Optional[float] = None) -> float:
    """c in M ~ (2 N kappa / w^2) c x^2 for the quadratic regimes.

    For misalignment-only this is the x << x_s limit.
    """
    noise = NoiseModel() if noise is None else noise
    if scene.gamma != 0.0:
        raise DomainError(f"The {regime} expansion holds for equally bright sources only (gamma={scene.gamma})")
    nk = scene.n_kappa
    c, s = exact_cos_sin(scene.theta)
    c4, s4 = c ** 4, s ** 4
    angular = 3.0 + math.cos(4.0 * scene.theta)

    if regime == "dc-dominated":
        sigma = _uniform_sigma(scene, noise)
        c00, c01, c10, _, _ = _low_order_entries(noise)
        fundamental = _ratio(c00 ** 2, 2.0 * nk * (c00 ** 2 + sigma ** 2) + c00 + sigma, regime)
        first = _ratio(s4 * c01 ** 2 + c4 * c10 ** 2, 2.0 * nk * sigma ** 2 + sigma, regime)
        return fundamental + first
    if regime == "ct-dominated":
        sigma = _uniform_sigma(scene, noise)
        _, c01, c10, leak01, leak10 = _low_order_entries(noise)
        return (_ratio(s4 * c01 ** 2, leak01 + sigma, regime)
                + _ratio(c4 * c10 ** 2, leak10 + sigma, regime))
    if regime == "uniform-dc":
        sigma = _uniform_sigma(scene, noise)
        return (_ratio(angular, 8.0 * nk * sigma ** 2 + 4.0 * sigma, regime)
                + 1.0 / (2.0 * nk * (sigma ** 2 + 1.0) + sigma + 1.0))
    if regime == "uniform-ct":
        sigma = _uniform_sigma(scene, noise)
        if ct_power is None:
            if noise.crosstalk is None:
                raise DomainError("uniform-ct needs a crosstalk matrix or an explicit power |r|^2")
            ct_power = noise.crosstalk.mean_offdiag_power
        return _ratio(angular, 4.0 * (ct_power + sigma), regime)
    if regime == "misalignment-only":
        x_s = misalignment.x_s(scene.waist)
        if x_s == 0.0:
            raise DomainError("misalignment-only has no quadratic law without a centroid shift")
        cs, ss = exact_cos_sin(misalignment.theta_s)
        return (_ratio(s4, 4.0 * x_s ** 2 * ss ** 2, regime)
                + _ratio(c4, 4.0 * x_s ** 2 * cs ** 2, regime))
    raise DomainError(f"No quadratic law for regime '{regime}'")


def _misalignment_sensitivity(scene: Scene, misalignment: Misalignment) -> float:
    x = scene.x
    x_s = misalignment.x_s(scene.waist)
    c, s = exact_cos_sin(scene.theta)
    cs, ss = exact_cos_sin(misalignment.theta_s)
    prefactor = 2.0 * scene.n_kappa / scene.waist ** 2
    if x_s == 0.0:
        # aligned: sin^2 + cos^2
        return prefactor
    if x == 0.0:
        return 0.0
    terms = (_ratio(s ** 4, x * x * s * s + 4.0 * x_s ** 2 * ss ** 2, "misalignment-only")
             + _ratio(c ** 4, x * x * c * c + 4.0 * x_s ** 2 * cs ** 2, "misalignment-only"))
    return prefactor * terms * x * x


def approx_sensitivity(scene: Scene, misalignment: Misalignment = ALIGNED,
                       noise_regime: str = "low-brightness-diag", noise: Optional[NoiseModel] = None,
                       basis: Optional[ModeBasis] = None, ct_power: Optional[float] = None) -> float:
    """Closed-form sensitivity for one noise regime."""
    if noise_regime not in REGIMES:
        raise DomainError(f"Unknown noise regime '{noise_regime}', expected one of {REGIMES}")
    noise = NoiseModel() if noise is None else noise
    if noise_regime == "low-brightness-diag":
        md = demux_moments(scene, misalignment, noise.crosstalk, noise.dark, basis)
        mask = md.means > 0
        return float(np.sum(md.deriv[mask] ** 2 / md.means[mask]))
    if scene.gamma != 0.0:
        raise DomainError(f"The {noise_regime} expansion holds for equally bright sources only (gamma={scene.gamma})")
    if noise_regime == "misalignment-only":
        return _misalignment_sensitivity(scene, misalignment)
    coefficient = quadratic_coefficient(noise_regime, scene, misalignment, noise, ct_power)
    return 2.0 * scene.n_kappa / scene.waist ** 2 * coefficient * scene.x ** 2


@dataclass(frozen=True)
class DminQuery:
    """Repetitions mu and the log-spaced x = d/2w scan used to bracket the crossing."""

    mu: float = 1.0
    x_min: float = 1e-6
    x_max: float = 5.0
    points: int = 400

    def __post_init__(self):
        if not self.mu >= 1:
            raise DomainError(f"mu must be at least 1, got {self.mu}")
        if not 0 < self.x_min < self.x_max:
            raise DomainError(f"Scan bounds must satisfy 0 < x_min < x_max, got {self.x_min}, {self.x_max}")
        if self.points < 2:
            raise DomainError(f"Scan needs at least 2 points, got {self.points}")

    def n_det(self, scene: Scene) -> float:
        """Detected photons mu * 2 N kappa."""
        return self.mu * 2.0 * scene.n_kappa

    def grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.x_min), math.log10(self.x_max), int(self.points))


@dataclass(frozen=True)
class DminResult:
    d_min: float
    n_det: float
    g_max: float
    mu: float


def sensitivity_function(method: str, scene: Scene, misalignment: Misalignment = ALIGNED,
                         noise: Optional[NoiseModel] = None, basis: Optional[ModeBasis] = None,
                         grid: Optional[PixelGrid] = None) -> Callable[[float], float]:
    """M as a function of d for one measurement model, all else fixed."""
    noise = NoiseModel() if noise is None else noise
    basis = ModeBasis.full(2) if basis is None else basis
    grid = PixelGrid() if grid is None else grid
    if method == "demux-exact":
        return lambda d: sensitivity(prepared_moments(scene.with_separation(d), misalignment, noise, basis)).m_value
    if method == "demux-ideal-closed":
        return lambda d: sensitivity_ideal(scene.with_separation(d), basis.q_max)
    if method == "demux-asymptotic":
        return lambda d: sensitivity_asymptotic(scene.with_separation(d))
    if method == "direct-imaging":
        return lambda d: di_sensitivity(scene.with_separation(d), grid).m_value
    raise DomainError(f"Unknown method '{method}', expected one of {DMIN_METHODS}")


def dmin_solve(scene: Scene, misalignment: Misalignment = ALIGNED, noise: Optional[NoiseModel] = None,
               basis: Optional[ModeBasis] = None, query: Optional[DminQuery] = None,
               method: str = "demux-exact", grid: Optional[PixelGrid] = None) -> DminResult:
    """Smallest d with d sqrt(mu M(d)) = 1; `scene.d` is ignored."""
    query = DminQuery() if query is None else query
    m_of_d = sensitivity_function(method, scene, misalignment, noise, basis, grid)

    def g(d):
        return d * math.sqrt(query.mu * max(m_of_d(d), 0.0))

    scan = 2.0 * scene.waist * query.grid()
    g_max, d_at_max = -math.inf, float("nan")
    previous = None
    for i, d in enumerate(scan):
        value = g(d)
        if value > g_max:
            g_max, d_at_max = value, d
        if value >= 1.0:
            if i == 0:
                raise NoCrossing(
                    f"g(d) = {value:.6g} >= 1 already at the lower scan bound d={d:.3g}",
                    g_max=value, d_at_max=d,
                )
            if value == 1.0:
                return DminResult(float(d), query.n_det(scene), value, query.mu)
            root = brentq(lambda t: g(t) - 1.0, previous, d, xtol=1e-14 * scene.waist, rtol=1e-10)
            logger.debug(f"d_min={root:.6g} for N_det={query.n_det(scene):.6g} ({method})")
            return DminResult(float(root), query.n_det(scene), value, query.mu)
        previous = d
    raise NoCrossing(
        f"d sqrt(mu M) stays below 1 on the scan (max {g_max:.6g} at d={d_at_max:.6g})",
        g_max=g_max, d_at_max=d_at_max,
    )


def dmin_ensemble(scene: Scene, misalignment: Misalignment, noise: NoiseModel, basis: ModeBasis,
                  query: DminQuery, ct_power: float, base_seed: int, count: int,
                  threads: int = 1) -> Tuple[float, float, List[float]]:
    """d_min per crosstalk ensemble member; returns (mean, std, members)."""
    members = crosstalk_ensemble(basis.full_size, ct_power, base_seed, count)

    def solve(ct: CrosstalkMatrix) -> float:
        return dmin_solve(scene, misalignment, noise.with_crosstalk(ct), basis, query).d_min

    values = parallel_map(solve, members, threads)
    return float(np.mean(values)), float(np.std(values)), values


def _printed_dmin(regime: str, scene: Scene, misalignment: Misalignment, noise: NoiseModel,
                  mu: float, ct_power: Optional[float]) -> float:
    w = scene.waist
    nk = scene.n_kappa
    n_det = mu * 2.0 * nk
    angular = 3.0 + math.cos(4.0 * scene.theta)
    if regime == "ideal":
        return w / math.sqrt(n_det)
    if regime == "direct-imaging":
        return w / n_det ** 0.25 * 0.5 ** 0.25
    if regime == "misalignment":
        if misalignment.d_s == 0.0:
            raise DomainError("Misalignment d_min needs a non-zero centroid shift")
        c, s = exact_cos_sin(scene.theta)
        cs, ss = exact_cos_sin(misalignment.theta_s)
        trig = _ratio(c ** 4, cs ** 2, "misalignment") + _ratio(s ** 4, ss ** 2, "misalignment")
        return math.sqrt(2.0 * misalignment.d_s * w) / (n_det ** 0.25 * trig ** 0.25)
    if regime == "crosstalk":
        power = _crosstalk_power(noise, ct_power)
        return w / n_det ** 0.25 * (power / angular) ** 0.25
    dark = _dark_level(noise)
    h = dark * (dark + 1.0)
    if regime == "dark-counts":
        bracket = angular / (4.0 * h) + 1.0 / (h + 2.0 * nk * (2.0 * nk + 1.0))
        return math.sqrt(2.0) * w / (nk * nk * mu) ** 0.25 * bracket ** -0.25
    if regime == "dark-counts-large-n":
        threshold = (math.sqrt(4.0 + 2.0 / mu) - 2.0) / 4.0
        if dark < threshold:
            raise DomainError(
                f"Large-N dark-count law gives better-than-ideal scaling for N^dc={dark} "
                f"below {threshold:.6g}"
            )
        if dark < 1.0:
            logger.warning(
                f"Large-N dark-count law tends to underestimate d_min at low dark counts (N^dc={dark})"
            )
        return math.sqrt(2.0) * w / (math.sqrt(nk) * mu ** 0.25) * (angular / h) ** -0.25
    raise DomainError(f"Unknown closed-form regime '{regime}', expected one of {CLOSED_FORM_REGIMES}")


def _crosstalk_power(noise: NoiseModel, ct_power: Optional[float]) -> float:
    if ct_power is not None:
        return ct_power
    if noise.crosstalk is None:
        raise DomainError("Crosstalk d_min needs a crosstalk matrix or an explicit power |r|^2")
    return noise.crosstalk.mean_offdiag_power


def _dark_level(noise: NoiseModel) -> float:
    if noise.dark is None or noise.dark.is_zero:
        raise DomainError("Dark-count d_min needs a non-zero dark-count level")
    means = noise.dark.per_mode_mean
    if np.ptp(means) > 0:
        raise DomainError("Dark-count d_min assumes the same level in every mode")
    return float(means[0])


def _derived_dmin(regime: str, scene: Scene, misalignment: Misalignment, noise: NoiseModel,
                  mu: float, ct_power: Optional[float]) -> float:
    """Solve d sqrt(mu (2 N kappa / w^2) c x^2) = 1 for the regime's quadratic coefficient c."""
    n_det = mu * 2.0 * scene.n_kappa
    if regime == "ideal":
        return scene.waist / math.sqrt(n_det)
    if regime == "direct-imaging":
        coefficient = 8.0
    elif regime == "misalignment":
        coefficient = quadratic_coefficient("misalignment-only", scene, misalignment, noise)
    elif regime == "crosstalk":
        coefficient = quadratic_coefficient("uniform-ct", scene, misalignment, noise,
                                            _crosstalk_power(noise, ct_power))
    elif regime == "dark-counts":
        _dark_level(noise)
        coefficient = quadratic_coefficient("uniform-dc", scene, misalignment, noise)
    elif regime == "dark-counts-large-n":
        dark = _dark_level(noise)
        sigma = dark / (2.0 * scene.n_kappa)
        angular = 3.0 + math.cos(4.0 * scene.theta)
        coefficient = angular / (8.0 * scene.n_kappa * sigma ** 2 + 4.0 * sigma)
    else:
        raise DomainError(f"Unknown closed-form regime '{regime}', expected one of {CLOSED_FORM_REGIMES}")
    return math.sqrt(2.0) * scene.waist * (n_det * coefficient) ** -0.25


def dmin_closed_form(regime: str, scene: Scene, misalignment: Misalignment = ALIGNED,
                     noise: Optional[NoiseModel] = None, mu: float = 1.0, variant: str = "printed",
                     ct_power: Optional[float] = None) -> float:
    """Large-N_det closed forms for d_min.

    "printed" evaluates the closed-form scaling laws as stated, "derived" re-solves the
    threshold condition with the quadratic coefficient of the matching
    small-separation sensitivity. They agree for the ideal, misalignment,
    large-N dark-count and direct-imaging laws. For crosstalk the printed
    form is smaller by a factor 2, for dark counts it is larger by sqrt(2);
    the gap is logged whenever it shows.
    """
    if variant not in CLOSED_FORM_VARIANTS:
        raise DomainError(f"Unknown variant '{variant}', expected one of {CLOSED_FORM_VARIANTS}")
    noise = NoiseModel() if noise is None else noise
    if regime != "ideal" and scene.gamma != 0.0:
        raise DomainError(f"d_min closed forms hold for equally bright sources only (gamma={scene.gamma})")
    printed = _printed_dmin(regime, scene, misalignment, noise, mu, ct_power)
    derived = _derived_dmin(regime, scene, misalignment, noise, mu, ct_power)
    if abs(printed - derived) > VARIANT_TOLERANCE * derived:
        logger.warning(
            f"Printed and derived d_min disagree for '{regime}': {printed:.6g} vs {derived:.6g}"
        )
    return printed if variant == "printed" else derived
