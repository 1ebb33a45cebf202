# errors.py
"""Exception hierarchy shared by every module.

All errors derive from SuperresError, itself a RuntimeError, so callers that
only care about "the computation failed" can catch one type.
"""

from typing import Optional, Sequence

import numpy as np


class SuperresError(RuntimeError):
    """Root of all errors raised by superres_moments."""


class DomainError(SuperresError, ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class DimensionMismatch(SuperresError, ValueError):
    """Arrays or bases that must agree in size do not."""


class ConvergenceError(SuperresError):
    """An iterative or root-finding step did not reach its target."""


class DegenerateScene(SuperresError):
    """The estimation problem is not well posed (e.g. zero separation)."""


class SingularCovariance(SuperresError):
    """The covariance matrix could not be inverted."""

    def __init__(self, message: str, null_direction: Optional[np.ndarray] = None):
        super().__init__(message)
        self.null_direction = null_direction


class ZeroVariance(SuperresError):
    """A linear observable has zero variance."""


class SingularCore(SuperresError):
    """The 3x3 Woodbury core of the direct-imaging covariance is singular."""


class NoCrossing(SuperresError):
    """d*sqrt(mu*M(d)) never reaches 1 on the scan grid."""

    def __init__(self, message: str, g_max: float = float("nan"), d_at_max: float = float("nan")):
        super().__init__(message)
        self.g_max = g_max
        self.d_at_max = d_at_max


class ConfigError(SuperresError):
    """The run configuration document is malformed or inconsistent."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.field = field
        self.line = line


class ValidationFailure(SuperresError):
    """One or more oracle checks failed."""

    def __init__(self, message: str, failures: Sequence[dict] = ()):
        super().__init__(message)
        self.failures = list(failures)


# Errors that the cli reports with the numeric-failure exit code.
NUMERIC_ERRORS = (
    SingularCovariance,
    NoCrossing,
    ConvergenceError,
    DegenerateScene,
    SingularCore,
    ZeroVariance,
)
