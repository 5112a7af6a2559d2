"""Sample covariance and correlation estimates over sliding windows.

The workhorse is :func:`suffix_correlations`, which returns the half-vectorised
sample correlation of every suffix ``X[s:]`` of a buffer in one pass. All the
window-limited statistics reduce to it because the candidate windows
``{x_t', ..., x_t}`` are exactly the suffixes of the most recent ``w + 1``
observations.

Three estimator modes are supported:

``"full"``
    Unknown mean and variance: centre by the window mean, divide by the
    window standard deviations (the default).
``"center"``
    Known unit variance: centre by the window mean, divisor ``n - 1``, no
    rescaling.
``"known"``
    Known zero mean and unit variance: ``(1/n) sum x x^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    ConfigError,
    CorrelationEstimate,
    DegenerateWindowError,
    DiffVector,
    MomentSpec,
    Observation,
    vech,
    vech_index,
)

MODES = ("full", "center", "known")

ArrayLike = Union[np.ndarray, Sequence[Observation], Sequence[Sequence[float]]]


def as_array(window: ArrayLike) -> np.ndarray:
    """Stack observations into an ``(n, p)`` float array and check finiteness."""
    if isinstance(window, np.ndarray):
        X = np.asarray(window, dtype=float)
    elif len(window) and isinstance(window[0], Observation):
        X = np.stack([o.values for o in window])
    else:
        X = np.asarray(window, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ConfigError("a window must be a 2-d array of shape (n, p)")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise ConfigError(f"non-finite value at row {bad[0]}, column {bad[1]}")
    return X


def sample_covariance(window: ArrayLike) -> np.ndarray:
    """Unbiased sample covariance of a window of observations.

    Parameters
    ----------
    window : array_like, shape (n, p)
        Rows are observations.

    Returns
    -------
    ndarray, shape (p, p)
        ``(1/(n-1)) sum (x_k - xbar)(x_k - xbar)^T``.

    Examples
    --------
    >>> sample_covariance([[1, 2], [2, 4], [3, 6]])
    array([[1., 2.],
           [2., 4.]])
    """
    X = as_array(window)
    n = X.shape[0]
    if n < 2:
        raise ConfigError("sample covariance needs at least 2 observations")
    Xc = X - X.mean(axis=0)
    return Xc.T @ Xc / (n - 1)


def _degenerate_coordinate(var: np.ndarray, sumsq: np.ndarray) -> int:
    bad = np.flatnonzero(var <= 1e-12 * np.maximum(sumsq, 1e-300))
    return int(bad[0]) if bad.size else -1


def sample_correlation(
    window: ArrayLike, mode: str = "full", span: Tuple[int, int] = None
) -> CorrelationEstimate:
    """Sample correlation matrix of a window.

    Parameters
    ----------
    window : array_like, shape (n, p)
    mode : {"full", "center", "known"}
        Estimator, see the module docstring. The two known-moment modes may
        produce off-diagonal values outside [-1, 1]; they are clamped.
    span : tuple of int, optional
        Time indices recorded on the estimate.

    Raises
    ------
    DegenerateWindowError
        If ``mode="full"`` and a coordinate has zero sample variance.
    """
    X = as_array(window)
    n, p = X.shape
    if n < 2:
        raise ConfigError("sample correlation needs at least 2 observations")
    if mode == "known":
        S = X.T @ X / n
    else:
        S = sample_covariance(X)
        if mode == "full":
            d = np.diag(S).copy()
            j = _degenerate_coordinate(d * (n - 1), (X ** 2).sum(0))
            if j >= 0:
                raise DegenerateWindowError(j)
            s = np.sqrt(d)
            S = S / np.outer(s, s)
        elif mode != "center":
            raise ConfigError(f"unknown estimator mode {mode!r}")
    S = np.clip((S + S.T) / 2, -1.0, 1.0)
    np.fill_diagonal(S, 1.0)
    return CorrelationEstimate(S, n_samples=n, window=span or (1, n))


def suffix_correlations(
    X: np.ndarray, n_starts: int, mode: str = "full"
) -> Tuple[np.ndarray, np.ndarray]:
    """Half-vectorised correlations of the suffixes ``X[s:]`` for ``s < n_starts``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Buffer in chronological order.
    n_starts : int
        Number of leading start positions; each suffix must keep at least 2
        rows, so ``n_starts <= n - 1``.
    mode : {"full", "center", "known"}

    Returns
    -------
    corr : ndarray, shape (n_starts, p(p-1)/2)
        Correlations in canonical vech order, clamped to [-1, 1]. Rows of
        degenerate windows are filled with NaN.
    degenerate : ndarray of int, shape (n_starts,)
        Index of the first zero-variance coordinate per window, else -1.
    """
    n, p = X.shape
    if not 1 <= n_starts <= n - 1:
        raise ConfigError(f"n_starts must be in [1, {n - 1}], got {n_starts}")
    i, j = vech_index(p)
    if mode != "known":
        # shifting by a constant leaves every centred window unchanged and
        # keeps the running sums small
        X = X - X.mean(axis=0)
    counts = np.arange(n, 0, -1, dtype=float)[:n_starts, None]
    prod = X[:, i] * X[:, j]
    cross = np.cumsum(prod[::-1], axis=0)[::-1][:n_starts]
    degenerate = np.full(n_starts, -1)
    if mode == "known":
        corr = cross / counts
    else:
        s1 = np.cumsum(X[::-1], axis=0)[::-1][:n_starts]
        sq = np.cumsum((X ** 2)[::-1], axis=0)[::-1][:n_starts]
        cov = cross - s1[:, i] * s1[:, j] / counts
        if mode == "center":
            corr = cov / (counts - 1)
        elif mode == "full":
            var = sq - s1 ** 2 / counts
            bad = var <= 1e-12 * np.maximum(sq, 1e-300)
            if bad.any():
                rows = np.flatnonzero(bad.any(axis=1))
                degenerate[rows] = np.argmax(bad[rows], axis=1)
                var = np.where(bad, 1.0, var)
            sd = np.sqrt(var)
            corr = cov / (sd[:, i] * sd[:, j])
            if bad.any():
                corr[degenerate >= 0] = np.nan
        else:
            raise ConfigError(f"unknown estimator mode {mode!r}")
    return np.clip(corr, -1.0, 1.0), degenerate


@dataclass(frozen=True)
class ReferenceModel:
    """Reference correlation estimate built from ``H + 1`` observations.

    Attributes
    ----------
    R0_hat : CorrelationEstimate
    H : int
        Reference size; the estimate uses ``H + 1`` observations.
    mean, scale : ndarray
        Per-coordinate location and scale of the reference window. Streams
        are standardised with them before estimation; sample correlations
        are invariant to this, it only keeps running sums well conditioned.
    mode : str
        Estimator mode used for the reference and for every window.
    """

    R0_hat: CorrelationEstimate
    H: int
    mean: np.ndarray
    scale: np.ndarray
    mode: str = "full"
    r0_vech: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ConfigError("reference scales must be positive")
        v = vech(self.R0_hat.entries).copy()
        v.setflags(write=False)
        object.__setattr__(self, "r0_vech", v)

    @property
    def p(self) -> int:
        return self.R0_hat.p

    def standardize(self, X: np.ndarray) -> np.ndarray:
        """Apply the reference standardiser (identity for known-moment modes)."""
        X = np.asarray(X, dtype=float)
        if self.mode != "full":
            return X
        return (X - self.mean) / self.scale

    def restrict(self, coords: Sequence[int]) -> "ReferenceModel":
        """Reference restricted to a subset of coordinates (0-based)."""
        c = np.asarray(coords, dtype=int)
        sub = CorrelationEstimate(self.R0_hat.entries[np.ix_(c, c)],
                                  self.R0_hat.n_samples, self.R0_hat.window)
        return ReferenceModel(sub, self.H, self.mean[c], self.scale[c], self.mode)


def build_reference(reference: ArrayLike, mode: str = "full") -> ReferenceModel:
    """Build the reference model from ``H + 1`` historical observations.

    Parameters
    ----------
    reference : array_like, shape (H + 1, p)
    mode : {"full", "center", "known"}

    Examples
    --------
    >>> ref = build_reference([[0., 1.], [1., 0.], [2., 2.]])
    >>> ref.H, ref.R0_hat.n_samples
    (2, 3)
    """
    X = as_array(reference)
    if X.shape[0] < 3:
        raise ConfigError("the reference needs at least 3 observations (H >= 2)")
    if mode not in MODES:
        raise ConfigError(f"unknown estimator mode {mode!r}")
    R0 = sample_correlation(X, mode="full" if mode == "full" else mode,
                            span=(-(X.shape[0] - 1), 0))
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    if mode != "full":
        scale = np.where(scale > 0, scale, 1.0)
    return ReferenceModel(R0, X.shape[0] - 1, mean, scale, mode)


def diff_vector(R0_hat, R_hat, candidate_start: int = 0, end: int = 0) -> DiffVector:
    """Squared differences of the strict lower triangles, in vech order.

    Examples
    --------
    >>> import numpy as np
    >>> R = np.array([[1, .6], [.6, 1]])
    >>> diff_vector(np.eye(2), R).values
    array([0.36])
    """
    A = R0_hat.entries if isinstance(R0_hat, CorrelationEstimate) else np.asarray(R0_hat, float)
    B = R_hat.entries if isinstance(R_hat, CorrelationEstimate) else np.asarray(R_hat, float)
    if A.shape != B.shape:
        raise ConfigError(f"dimension mismatch: {A.shape} vs {B.shape}")
    a = np.clip(vech(A), -1, 1)
    b = np.clip(vech(B), -1, 1)
    return DiffVector((a - b) ** 2, candidate_start, end)


def expected_v_known_mean(moments: MomentSpec, H: int, t: int) -> float:
    """Mean of a diff-vector entry for the known-moment estimator.

    The reference uses ``H + 1`` observations and the window ``t``.
    """
    if H < 1 or t < 1:
        raise ConfigError("H and t must be positive")
    m = moments
    return ((m.rho0 - m.rho1) ** 2 + (m.beta20 - m.rho0 ** 2) / (H + 1)
            + (m.beta21 - m.rho1 ** 2) / t)


def expected_v_unknown_mean(moments: MomentSpec, H: int, t: int) -> float:
    """Leading-order mean of a diff-vector entry when the mean is estimated.

    Exact at zero correlation for the centred estimator with known unit
    variance; away from zero it is a second-order approximation.
    """
    if H < 2 or t < 2:
        raise ConfigError("H and t must be at least 2")
    m = moments
    return ((m.rho0 - m.rho1) ** 2 + m.beta20 / H + m.beta21 / (t - 1)
            + m.rho1 ** 2 * (5 - t) / (t * (t - 1))
            + m.rho0 ** 2 * (3 * H + 4 - H ** 2) / (H * (H + 1) ** 2))


class WindowBuffer:
    """Ring buffer of the most recent observations.

    Parameters
    ----------
    capacity : int
        Maximum number of observations kept (``w + 1`` for window-limited
        statistics). ``None`` keeps everything.
    p : int
    """

    def __init__(self, capacity: Optional[int], p: int):
        self.capacity = capacity
        self.p = p
        self._rows = np.empty((capacity if capacity else 64, p))
        self._start = 0
        self._count = 0
        self.last_time = 0
        self.sums = np.zeros(p)

    def __len__(self) -> int:
        return self._count

    def append(self, x: np.ndarray, time_index: Optional[int] = None) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise ConfigError(f"observation has dimension {x.size}, expected {self.p}")
        t = self.last_time + 1 if time_index is None else int(time_index)
        if self._count and t != self.last_time + 1:
            raise ConfigError("time indices in a window must be contiguous")
        cap = self._rows.shape[0]
        if self.capacity is None and self._count == cap:
            self._rows = np.concatenate([self.array(), np.empty((cap, self.p))])
            self._start = 0
            cap = self._rows.shape[0]
        if self.capacity is not None and self._count == self.capacity:
            self.sums -= self._rows[self._start]
            self._rows[self._start] = x
            self._start = (self._start + 1) % cap
        else:
            self._rows[(self._start + self._count) % cap] = x
            self._count += 1
        self.sums += x
        self.last_time = t

    def array(self) -> np.ndarray:
        """Observations in chronological order, shape ``(len, p)``."""
        cap = self._rows.shape[0]
        idx = (self._start + np.arange(self._count)) % cap
        return self._rows[idx]

    @property
    def first_time(self) -> int:
        return self.last_time - self._count + 1

    def mean(self) -> np.ndarray:
        return self.sums / max(self._count, 1)
