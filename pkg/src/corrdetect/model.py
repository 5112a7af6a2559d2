"""Domain types shared across the package.

Everything here is a small immutable value object. Matrices are plain
``numpy.ndarray`` instances; the dataclasses only add validation and a few
derived quantities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np


class Kind(str, Enum):
    """Norm used to collapse a diff vector into a scalar."""

    SUM = "sum"
    MAX = "max"
    COMBINED = "combined"


class Variant(str, Enum):
    """Range of candidate change points searched by a statistic."""

    FULL = "full"
    WINDOW = "window"
    SHEWHART = "shewhart"


class Enhancement(str, Enum):
    """Window augmentation applied before estimating the window correlation."""

    NONE = "none"
    SMOTE = "smote"
    KNOCKOFF = "knockoff"


class ConfigError(ValueError):
    """Raised for invalid configurations or mismatched inputs."""


class DegenerateWindowError(ValueError):
    """Raised when a window has a coordinate with zero sample variance."""

    def __init__(self, coordinate: int, message: Optional[str] = None):
        self.coordinate = coordinate
        super().__init__(message or f"coordinate {coordinate} has zero sample variance")


# ---------------------------------------------------------------------------
# half-vectorisation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _vech_index_cached(p: int) -> Tuple[np.ndarray, np.ndarray]:
    cols, rows = np.triu_indices(p, 1)
    # triu gives (r, c) with r < c in row-major order; swapping yields
    # lower-triangle entries (i=c, j=r) ordered column by column.
    rows, cols = rows.copy(), cols.copy()
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def vech_index(p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the strict lower triangle, column-major.

    The order is (1,0), (2,0), ..., (p-1,0), (2,1), ... which is the single
    canonical map used by every module.
    """
    if p < 2:
        raise ConfigError("dimension must be at least 2")
    return _vech_index_cached(int(p))


def n_pairs(p: int) -> int:
    """Number of strictly lower-triangular entries, p(p-1)/2."""
    return p * (p - 1) // 2


def vech(mat: np.ndarray) -> np.ndarray:
    """Half-vectorise the strict lower triangle of ``mat`` (last two axes)."""
    mat = np.asarray(mat)
    i, j = vech_index(mat.shape[-1])
    return mat[..., i, j]


def unvech(vec: np.ndarray, p: int, diag: float = 1.0) -> np.ndarray:
    """Inverse of :func:`vech` for symmetric matrices with constant diagonal."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape[-1] != n_pairs(p):
        raise ConfigError(f"expected {n_pairs(p)} entries for p={p}, got {vec.shape[-1]}")
    i, j = vech_index(p)
    out = np.zeros(vec.shape[:-1] + (p, p))
    out[..., i, j] = vec
    out[..., j, i] = vec
    idx = np.arange(p)
    out[..., idx, idx] = diag
    return out


# ---------------------------------------------------------------------------
# value objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    """One reading of the p-dimensional stream."""

    values: np.ndarray
    time_index: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ConfigError("an observation needs p >= 2 values")
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"non-finite value in observation at t={self.time_index}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CorrelationEstimate:
    """A sample (or population) correlation matrix.

    Parameters
    ----------
    entries : ndarray, shape (p, p)
        Symmetric matrix with unit diagonal.
    n_samples : int
        Number of observations the estimate was computed from. Population
        matrices use a nominal value of 2.
    window : tuple of int
        (start, end) time indices of the window, inclusive.
    """

    entries: np.ndarray
    n_samples: int = 2
    window: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        mat = np.array(self.entries, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 2:
            raise ConfigError("correlation entries must be a square matrix with p >= 2")
        if not np.allclose(mat, mat.T, atol=1e-12, rtol=0):
            raise ConfigError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(mat), 1.0, atol=1e-12, rtol=0):
            raise ConfigError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(mat) > 1 + 1e-12):
            raise ConfigError("correlation entries must lie in [-1, 1]")
        if self.n_samples < 2:
            raise ConfigError("a correlation estimate needs at least 2 samples")
        np.fill_diagonal(mat, 1.0)
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def vech(self) -> np.ndarray:
        return vech(self.entries)


@dataclass(frozen=True)
class DiffVector:
    """Squared entrywise differences between two correlation estimates."""

    values: np.ndarray
    candidate_start: int
    end: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0):
            raise ConfigError("diff vector entries must be nonnegative")
        object.__setattr__(self, "values", vals)

    @property
    def l1(self) -> float:
        return float(self.values.sum())

    @property
    def linf(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


@dataclass(frozen=True)
class DetectorConfig:
    """Configuration of a detection statistic and its stopping rule.

    Parameters
    ----------
    kind : Kind
        Sum, Max or Combined (max of the two threshold-normalised parts).
    variant : Variant
        Full, window-limited or Shewhart.
    w : int
        Window size; windows hold ``w + 1`` observations.
    H : int
        Reference size; the reference holds ``H + 1`` observations.
    lag : int
        Spacing of evaluation steps. ``1`` evaluates every step.
    enhancement : Enhancement
        Augmentation of each window before estimation.
    threshold_sum, threshold_max : float
        Alarm thresholds for the sum and max parts.
    noise_margin : float
        Extra excess over the threshold required to raise an alarm.
    k_neighbors : int
        Neighbour count for SMOTE augmentation.
    """

    kind: Kind = Kind.SUM
    variant: Variant = Variant.WINDOW
    w: int = 20
    H: int = 100
    lag: int = 1
    enhancement: Enhancement = Enhancement.NONE
    threshold_sum: float = np.inf
    threshold_max: float = np.inf
    noise_margin: float = 0.0
    k_neighbors: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "enhancement", Enhancement(self.enhancement))
        if self.w < 2:
            raise ConfigError("window size w must be at least 2")
        if self.H < 2:
            raise ConfigError("reference size H must be at least 2")
        if not 1 <= self.lag <= self.w:
            raise ConfigError("lag must satisfy 1 <= lag <= w")
        if self.noise_margin < 0:
            raise ConfigError("noise_margin must be nonnegative")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be positive")
        if self.kind in (Kind.SUM, Kind.COMBINED) and not self.threshold_sum > 0:
            raise ConfigError("threshold_sum must be positive")
        if self.kind in (Kind.MAX, Kind.COMBINED) and not self.threshold_max > 0:
            raise ConfigError("threshold_max must be positive")

    @property
    def threshold(self) -> float:
        """Threshold of the configured kind (1 for the combined ratio)."""
        if self.kind is Kind.SUM:
            return self.threshold_sum
        if self.kind is Kind.MAX:
            return self.threshold_max
        return 1.0

    def check_dimension(self, p: int) -> None:
        """Validate dimension-dependent constraints."""
        if p < 2:
            raise ConfigError("dimension must be at least 2")
        if self.enhancement is Enhancement.KNOCKOFF and not p > 2 * self.w + 2:
            raise ConfigError(
                f"knockoff augmentation needs p > 2w+2 (p={p}, w={self.w})"
            )

    def replace(self, **changes) -> "DetectorConfig":
        from dataclasses import replace as _replace

        return _replace(self, **changes)


@dataclass(frozen=True)
class SignalStrength:
    """Sum and max of squared population correlation changes."""

    delta1: float
    delta2: float

    def __post_init__(self):
        if self.delta1 < 0 or self.delta2 < 0:
            raise ConfigError("signal strengths must be nonnegative")
        if self.delta2 > self.delta1 * (1 + 1e-12) + 1e-15:
            raise ConfigError("delta2 cannot exceed delta1")


@dataclass(frozen=True)
class MomentSpec:
    """Means and second moments of coordinate products before and after the change.

    ``rho`` is E[x_i x_j] for standardised coordinates and ``beta2`` is
    E[(x_i x_j)^2].
    """

    rho0: float
    rho1: float
    beta20: float
    beta21: float

    def __post_init__(self):
        if self.beta20 < self.rho0 ** 2 - 1e-12 or self.beta21 < self.rho1 ** 2 - 1e-12:
            raise ConfigError("second moments must dominate squared means")

    @classmethod
    def gaussian(cls, rho0: float, rho1: Optional[float] = None) -> "MomentSpec":
        """Moments of a Gaussian product, E[(x_i x_j)^2] = 1 + 2 rho^2."""
        rho1 = rho0 if rho1 is None else rho1
        return cls(rho0, rho1, 1 + 2 * rho0 ** 2, 1 + 2 * rho1 ** 2)


@dataclass(frozen=True)
class ArlApproxInput:
    """Inputs of the analytic run-length approximation.

    ``mu`` and ``sigma_d`` are the pre-change mean and standard deviation of
    the monitored quantity; ``b`` is the threshold on the same scale.
    """

    b: float
    mu: float
    sigma_d: float
    w: int
    kappa: float = field(init=False)
    xi1: float = field(init=False)
    xi2: float = field(init=False)

    def __post_init__(self):
        if not self.sigma_d > 0:
            raise ConfigError("sigma_d must be positive")
        if self.w < 2:
            raise ConfigError("window size must be at least 2")
        object.__setattr__(self, "kappa", (self.b - self.mu) ** 2 / self.sigma_d ** 2)
        object.__setattr__(self, "xi1", 2 * self.b / np.sqrt(self.w * self.sigma_d ** 2))
        object.__setattr__(self, "xi2", 2 * self.b / self.sigma_d)


def _as_matrix(R) -> np.ndarray:
    if isinstance(R, CorrelationEstimate):
        return R.entries
    return np.asarray(R, dtype=float)


def signal_strength(R0, R1) -> SignalStrength:
    """Sum and max of squared changes over the strict lower triangle.

    Examples
    --------
    >>> import numpy as np
    >>> R1 = np.full((50, 50), 0.5); np.fill_diagonal(R1, 1)
    >>> s = signal_strength(np.eye(50), R1)
    >>> round(s.delta1, 2), s.delta2
    (306.25, 0.25)
    """
    A, B = _as_matrix(R0), _as_matrix(R1)
    if A.shape != B.shape:
        raise ConfigError(f"dimension mismatch: {A.shape} vs {B.shape}")
    d = vech(A - B) ** 2
    return SignalStrength(float(d.sum()), float(d.max()))
