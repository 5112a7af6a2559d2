"""Window augmentation by SMOTE interpolation or fixed-design knockoffs.

Windows are handled as ``p x m0`` matrices whose columns are observations.
Augmentation appends ``m0`` synthetic columns; the enhanced statistic then
scans the sub-windows ``[x_m, ..., x_m0, synthetic_1, ..., synthetic_m0]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .corrstat import ReferenceModel, suffix_correlations
from .detectors import DetectionState, make_state, reduce_candidates, weight
from .model import ConfigError, DetectorConfig, Enhancement, Variant

logger = logging.getLogger(__name__)


class AugmentationError(RuntimeError):
    """Raised when a knockoff construction is numerically impossible."""


@dataclass(frozen=True)
class AugmentedWindow:
    """Original columns followed by the same number of synthetic columns."""

    columns: np.ndarray
    m0: int
    mode: Enhancement

    @property
    def original(self) -> np.ndarray:
        return self.columns[:, : self.m0]

    @property
    def synthetic(self) -> np.ndarray:
        return self.columns[:, self.m0:]


@dataclass(frozen=True)
class KnockoffParams:
    """Ingredients of ``X_ko = X (I - Sigma^-1 diag z) + U C``."""

    z: np.ndarray
    U: np.ndarray
    C: np.ndarray
    Sigma: np.ndarray
    scale: np.ndarray


# ---------------------------------------------------------------------------
# SMOTE
# ---------------------------------------------------------------------------

def smote_augment(X: np.ndarray, k_neighbors: int = 5, rng=None,
                  u: Optional[np.ndarray] = None) -> AugmentedWindow:
    """Interpolate each column towards one of its nearest neighbour columns.

    Parameters
    ----------
    X : ndarray, shape (p, m0)
        Columns are observations.
    k_neighbors : int
        Neighbours considered per column (capped at ``m0 - 1``).
    rng : numpy.random.Generator, optional
    u : float or ndarray, optional
        Interpolation fractions; drawn uniformly on [0, 1] when omitted.

    Examples
    --------
    >>> import numpy as np
    >>> aug = smote_augment(np.array([[0., 1.], [0., 1.]]), u=0.5)
    >>> aug.synthetic[:, 0]
    array([0.5, 0.5])
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ConfigError("SMOTE needs at least 2 columns")
    if k_neighbors < 1:
        raise ConfigError("k_neighbors must be positive")
    rng = np.random.default_rng() if rng is None else rng
    m0 = X.shape[1]
    k = min(k_neighbors, m0 - 1)
    G = X.T @ X
    sq = np.diag(G)
    D = sq[:, None] + sq[None, :] - 2 * G
    np.fill_diagonal(D, np.inf)
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    pick = nbrs[np.arange(m0), rng.integers(0, k, size=m0)]
    if u is None:
        u = rng.random(m0)
    u = np.broadcast_to(np.asarray(u, dtype=float), (m0,))
    synth = X + u * (X[:, pick] - X)
    return AugmentedWindow(np.hstack([X, synth]), m0, Enhancement.SMOTE)


# ---------------------------------------------------------------------------
# knockoffs
# ---------------------------------------------------------------------------

def choose_z(Sigma: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Equicorrelated knockoff gaps ``z_j = min(1, 2 lambda_min(Sigma))``.

    This keeps ``2 diag(z) - diag(z) Sigma^-1 diag(z)`` positive semidefinite
    for any positive definite ``Sigma``.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    lam = linalg.eigvalsh(Sigma)[0]
    if lam <= tol * max(1.0, np.trace(Sigma) / Sigma.shape[0]):
        raise AugmentationError(f"Gram matrix is singular (lambda_min={lam:.3g})")
    return np.full(Sigma.shape[0], min(1.0, 2.0 * lam))


def _psd_factor(A: np.ndarray) -> np.ndarray:
    """Matrix ``C`` with ``C^T C = A``; Cholesky, or eigen root if singular."""
    try:
        return linalg.cholesky(A, lower=False)
    except linalg.LinAlgError:
        vals, vecs = linalg.eigh(A)
        if vals[0] < -1e-8 * max(1.0, abs(vals[-1])):
            raise AugmentationError("knockoff covariance is not positive semidefinite")
        return np.sqrt(np.clip(vals, 0, None))[:, None] * vecs.T


def knockoff_params(X: np.ndarray, rng=None, normalize: bool = False,
                    z: Optional[np.ndarray] = None, U: Optional[np.ndarray] = None
                    ) -> KnockoffParams:
    """Build ``z``, ``U`` and ``C`` for a fixed-design knockoff of ``X``.

    Parameters
    ----------
    X : ndarray, shape (p, m0)
    rng : numpy.random.Generator, optional
        Source of the Gaussian block orthonormalised into ``U``.
    normalize : bool
        Scale columns to unit norm before forming ``Sigma = X^T X``. By
        default the Gram matrix of the raw columns is used.
    z, U : ndarray, optional
        Override the equicorrelated gaps or the orthonormal complement.
    """
    X = np.asarray(X, dtype=float)
    p, m0 = X.shape
    if p < 2 * m0:
        raise ConfigError(f"knockoffs need p >= 2*m0 (p={p}, m0={m0})")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise AugmentationError(f"column {int(np.argmin(norms))} has zero norm")
    scale = norms if normalize else np.ones(m0)
    Xn = X / scale
    Sigma = Xn.T @ Xn
    Sigma = (Sigma + Sigma.T) / 2
    lam = linalg.eigvalsh(Sigma)[0]
    tr = np.trace(Sigma) / m0
    if lam <= 1e-10 * tr:
        ridge = 1e-10 * tr
        if lam + ridge <= 1e-12 * tr:
            raise AugmentationError(f"Gram matrix is singular (lambda_min={lam:.3g})")
        Sigma = Sigma + ridge * np.eye(m0)
    if z is None:
        z = choose_z(Sigma)
    z = np.asarray(z, dtype=float)
    Sinv_Z = linalg.solve(Sigma, np.diag(z), assume_a="pos")
    A = 2 * np.diag(z) - np.diag(z) @ Sinv_Z
    C = _psd_factor((A + A.T) / 2)
    if U is None:
        rng = np.random.default_rng() if rng is None else rng
        Q, _ = np.linalg.qr(np.hstack([Xn, rng.standard_normal((p, m0))]))
        U = Q[:, m0:2 * m0]
    return KnockoffParams(z, U, C, Sigma, scale)


def knockoff_columns(X: np.ndarray, params: KnockoffParams) -> np.ndarray:
    """Knockoff copy in the scale the parameters were built in."""
    Xn = np.asarray(X, dtype=float) / params.scale
    Sinv_Z = linalg.solve(params.Sigma, np.diag(params.z), assume_a="pos")
    return Xn - Xn @ Sinv_Z + params.U @ params.C


def knockoff_augment(X: np.ndarray, rng=None, normalize: bool = False) -> AugmentedWindow:
    """Append fixed-design knockoff columns to a window.

    The knockoffs satisfy ``Xk^T Xk = Sigma`` and ``X^T Xk = Sigma - diag(z)``
    in the scale ``Sigma`` is formed in. With ``normalize=True`` they are built
    for unit-norm columns and mapped back to the original column scales.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.linalg.qr(np.random.default_rng(1).standard_normal((10, 3)))[0]
    >>> aug = knockoff_augment(X, np.random.default_rng(2))
    >>> np.allclose(aug.synthetic.T @ aug.synthetic, np.eye(3))
    True
    """
    X = np.asarray(X, dtype=float)
    params = knockoff_params(X, rng, normalize)
    Xk = knockoff_columns(X, params) * params.scale
    return AugmentedWindow(np.hstack([X, Xk]), X.shape[1], Enhancement.KNOCKOFF)


def augment(X: np.ndarray, mode, rng, k_neighbors: int = 5) -> AugmentedWindow:
    """Dispatch to SMOTE or knockoff augmentation of a ``p x m0`` window."""
    mode = Enhancement(mode)
    if mode is Enhancement.SMOTE:
        return smote_augment(X, k_neighbors, rng)
    if mode is Enhancement.KNOCKOFF:
        return knockoff_augment(X, rng)
    raise ConfigError("no augmentation requested")


# ---------------------------------------------------------------------------
# enhanced detection step
# ---------------------------------------------------------------------------

def augmented_correlations(X: np.ndarray, config: DetectorConfig, rng,
                           mode: str = "full") -> Tuple[np.ndarray, np.ndarray]:
    """Correlations of the augmented sub-windows of a buffer.

    Parameters
    ----------
    X : ndarray, shape (m0, p)
        Buffered (standardised) observations, oldest first.

    Returns
    -------
    corr : ndarray, shape (n_cand, N)
        Row ``m - 1`` holds the correlation of augmented columns ``m..2 m0``.
    wts : ndarray, shape (n_cand,)
        ``H (m0 - m) / (H + m0 - m)`` for window-limited kinds, ones for
        Shewhart.
    """
    m0 = X.shape[0]
    if m0 < 2:
        raise ConfigError("augmentation needs at least 2 buffered observations")
    aug = augment(X.T, config.enhancement, rng, config.k_neighbors)
    rows = aug.columns.T
    if config.variant is Variant.SHEWHART:
        corr, _ = suffix_correlations(rows, 1, mode)
        return corr, np.ones(1)
    corr, _ = suffix_correlations(rows, m0 - 1, mode)
    return corr, weight(m0 - 1 - np.arange(m0 - 1), config.H)


def enhanced_values(reference: ReferenceModel, X: np.ndarray, config: DetectorConfig,
                    rng) -> Tuple[np.ndarray, np.ndarray, int]:
    """Per-candidate sum/max values of the augmented statistic.

    ``X`` holds the buffered, standardised observations; the third return
    value is the row offset of the first candidate (always 0).
    """
    m0 = X.shape[0]
    if config.variant is Variant.SHEWHART and m0 < config.w + 1:
        raise ConfigError("Shewhart statistics need a full window")
    corr, wts = augmented_correlations(X, config, rng, reference.mode)
    sums, maxs = reduce_candidates(corr, reference.r0_vech, None, reference.H, False)
    return sums * wts, maxs * wts, 0


def enhanced_step(reference: ReferenceModel, buffer, config: DetectorConfig, rng,
                  t: Optional[int] = None) -> DetectionState:
    """Enhanced statistic for the current buffer.

    Parameters
    ----------
    reference : ReferenceModel
    buffer : array_like, shape (m0, p)
        Raw observations, at most ``w + 1`` of them, ending at time ``t``.
    config : DetectorConfig
    rng : numpy.random.Generator
    t : int, optional
        Time of the last buffered observation; defaults to ``m0``.

    Returns
    -------
    DetectionState
        ``argmax_candidate`` is the time of the first original column in the
        winning sub-window, so ``m = 1`` maps to ``t - m0 + 1``.
    """
    X = reference.standardize(np.asarray(buffer, dtype=float))
    m0 = X.shape[0]
    t = m0 if t is None else t
    if config.enhancement is Enhancement.NONE:
        from .detectors import _window_values

        sums, maxs, offset = _window_values(reference, X, config.variant, config.w)
        return make_state(config, t, sums, maxs, t - m0 + 1 + offset)
    sums, maxs, _ = enhanced_values(reference, X, config, rng)
    return make_state(config, t, sums, maxs, t - m0 + 1)
