# scene.py
"""Physical configuration of the two-source imaging problem.

Conventions used everywhere in the package:

* the sources sit at +r0 and -r0 with r0 = (d/2)(cos theta, sin theta);
* the source at +r0 emits (1 - gamma) N photons on average, the source at
  -r0 emits (1 + gamma) N;
* lengths are given in the same units as the PSF waist w and reduced once to
  x = d / (2 w).
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from superres_moments.errors import DomainError

# Angles within this distance of a multiple of pi/2 are snapped to exact axes.
AXIS_SNAP = 1e-12


def exact_cos_sin(angle: float) -> Tuple[float, float]:
    """cos/sin of an angle with exact zeros on the axes.

    math.cos(pi/2) is 6e-17, not 0; the mode reduction and the symmetry
    relations rely on structural zeros being exact.
    """
    quarter = angle / (math.pi / 2)
    k = round(quarter)
    if abs(quarter - k) * (math.pi / 2) < AXIS_SNAP:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4]
    return math.cos(angle), math.sin(angle)


def axis_alignment(angle: float) -> str:
    """Return 'x', 'y' or '' depending on which axis the angle lies along."""
    c, s = exact_cos_sin(angle)
    if s == 0.0:
        return "x"
    if c == 0.0:
        return "y"
    return ""


@dataclass(frozen=True)
class Scene:
    """Two thermal point sources seen through a Gaussian PSF."""

    d: float
    theta: float
    n_mean: float
    gamma: float = 0.0
    kappa: float = 1.0
    waist: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.d) or self.d < 0:
            raise DomainError(f"Separation must be finite and non-negative, got d={self.d}")
        if not math.isfinite(self.theta):
            raise DomainError(f"Angle must be finite, got theta={self.theta}")
        if not self.n_mean > 0:
            raise DomainError(f"Mean photon number must be positive, got n_mean={self.n_mean}")
        if not -1.0 < self.gamma < 1.0:
            raise DomainError(f"Brightness imbalance must lie in (-1, 1), got gamma={self.gamma}")
        if not 0.0 < self.kappa <= 1.0:
            raise DomainError(f"Transmissivity must lie in (0, 1], got kappa={self.kappa}")
        if not self.waist > 0:
            raise DomainError(f"PSF waist must be positive, got waist={self.waist}")

    @property
    def x(self) -> float:
        """Dimensionless separation d / 2w."""
        return self.d / (2.0 * self.waist)

    @property
    def n_kappa(self) -> float:
        """Received photons per source, N kappa."""
        return self.n_mean * self.kappa

    @property
    def r0(self) -> Tuple[float, float]:
        """Half-separation vector in units of w."""
        c, s = exact_cos_sin(self.theta)
        return self.x * c, self.x * s

    def with_separation(self, d: float) -> "Scene":
        return Scene(d, self.theta, self.n_mean, self.gamma, self.kappa, self.waist)

    def with_x(self, x: float) -> "Scene":
        return self.with_separation(2.0 * self.waist * x)

    def with_brightness(self, n_mean: float) -> "Scene":
        return Scene(self.d, self.theta, n_mean, self.gamma, self.kappa, self.waist)


@dataclass(frozen=True)
class Misalignment:
    """Shift of the two-source centroid relative to the demultiplexer axis."""

    d_s: float = 0.0
    theta_s: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.d_s) or self.d_s < 0:
            raise DomainError(f"Centroid shift must be finite and non-negative, got d_s={self.d_s}")
        if not math.isfinite(self.theta_s):
            raise DomainError(f"Shift angle must be finite, got theta_s={self.theta_s}")

    @property
    def is_aligned(self) -> bool:
        return self.d_s == 0.0

    def x_s(self, waist: float) -> float:
        return self.d_s / (2.0 * waist)

    def shift(self, waist: float) -> Tuple[float, float]:
        """Shift vector r_s in units of w (the full d_s, not half of it)."""
        c, s = exact_cos_sin(self.theta_s)
        rs = self.d_s / waist
        return rs * c, rs * s


ALIGNED = Misalignment()


@dataclass(frozen=True)
class ModeBasis:
    """Measured Hermite-Gauss modes u_nm with 0 <= n, m <= q_max.

    The full basis is laid out row-major (n outer, m inner), so mode (n, m)
    sits at position n * (q_max + 1) + m. `active` is always a subset of the
    full layout kept in that same order.
    """

    q_max: int
    active: Tuple[Tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if int(self.q_max) != self.q_max or self.q_max < 0:
            raise DomainError(f"q_max must be a non-negative integer, got {self.q_max}")
        if not self.active:
            object.__setattr__(self, "active", self.full_pairs(self.q_max))
            return
        pairs = tuple((int(n), int(m)) for n, m in self.active)
        if len(set(pairs)) != len(pairs):
            raise DomainError(f"Duplicate modes in basis: {pairs}")
        for n, m in pairs:
            if not (0 <= n <= self.q_max and 0 <= m <= self.q_max):
                raise DomainError(f"Mode ({n}, {m}) lies outside 0..{self.q_max}")
        size = self.q_max + 1
        object.__setattr__(self, "active", tuple(sorted(pairs, key=lambda p: p[0] * size + p[1])))

    @staticmethod
    def full_pairs(q_max: int) -> Tuple[Tuple[int, int], ...]:
        return tuple((n, m) for n in range(q_max + 1) for m in range(q_max + 1))

    @classmethod
    def full(cls, q_max: int) -> "ModeBasis":
        return cls(q_max)

    @classmethod
    def axis(cls, q_max: int, axis: str) -> "ModeBasis":
        """The 1D family u_n0 (axis 'x') or u_0m (axis 'y')."""
        if axis == "x":
            return cls(q_max, tuple((n, 0) for n in range(q_max + 1)))
        if axis == "y":
            return cls(q_max, tuple((0, m) for m in range(q_max + 1)))
        raise DomainError(f"Unknown axis '{axis}', expected 'x' or 'y'")

    @property
    def size(self) -> int:
        return len(self.active)

    @property
    def full_size(self) -> int:
        return (self.q_max + 1) ** 2

    @property
    def is_full(self) -> bool:
        return self.size == self.full_size

    @property
    def positions(self) -> np.ndarray:
        """Indices of the active modes inside the full row-major layout."""
        size = self.q_max + 1
        return np.array([n * size + m for n, m in self.active], dtype=int)

    @property
    def orders(self) -> np.ndarray:
        """n + m for each active mode."""
        return np.array([n + m for n, m in self.active], dtype=int)

    @property
    def labels(self) -> List[str]:
        return [f"{n}{m}" for n, m in self.active]

    def restrict(self, keep: Sequence[int]) -> "ModeBasis":
        """Sub-basis made of the active modes at the given local indices."""
        return ModeBasis(self.q_max, tuple(self.active[i] for i in keep))


def make_scene(d: float, theta: float, n_mean: float, gamma: float = 0.0,
               kappa: float = 1.0, waist: float = 1.0) -> Scene:
    """Build a validated Scene; raises DomainError outside the physical domain."""
    return Scene(float(d), float(theta), float(n_mean), float(gamma), float(kappa), float(waist))
