"""Threshold calibration: sign-flip trials, analytic run lengths, delay predictions.

Sign-flip trials
----------------
Multiplying every observation by one Rademacher vector ``r`` multiplies the
window correlation between coordinates ``i`` and ``j`` by ``r_i r_j`` exactly,
while the reference estimate stays fixed. The ``"equivariant"`` engine uses
this: window correlations are computed once per step and every trial only
changes the signs ``s = vech(r r^T)``:

* sum statistic: ``sum (a - s c)^2 = sum a^2 + sum c^2 - 2 c . (a s)``, one
  matrix product for all trials;
* max statistic: a compiled scan over entries sorted by the upper bound
  ``(|a| + |c|)^2`` that stops once no remaining entry can win.

SMOTE neighbours depend only on Euclidean distances between observations,
which flips preserve, and a knockoff of ``D X`` can use ``D U`` as its
orthonormal complement, so both augmentations are equivariant as well; the
engine then shares one augmentation draw per step across trials. The
``"direct"`` engine recomputes each flipped stream from scratch.

Analytic run lengths
--------------------
:func:`arl_approx` evaluates the Gaussian-process approximation with the
overshoot factor :func:`zeta`. It is computed on the log scale, and it is not
monotone just above the pre-change mean (the ``sqrt(1/kappa)`` factor blows
up), so inversion searches the increasing branch beyond its minimiser.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy import integrate, optimize, stats

from .corrstat import ReferenceModel, as_array, build_reference, suffix_correlations
from .detectors import candidate_range, reduce_candidates, weight
from .model import (
    ArlApproxInput,
    ConfigError,
    DetectorConfig,
    Enhancement,
    Kind,
    MomentSpec,
    SignalStrength,
    Variant,
    n_pairs,
    vech_index,
)

logger = logging.getLogger(__name__)

FORMAT_TAG = "corrdetect-calibration/1"


class CalibrationError(RuntimeError):
    """Numerical failure during calibration (bracket, extrapolation, ...)."""


@dataclass
class SignFlipTrial:
    """Statistic sequence ``S_2 .. S_M`` of one calibration trial.

    ``flip`` is the Rademacher vector used (None for Monte Carlo trials).
    Steps where the statistic is undefined (Shewhart before a full window)
    hold 0.
    """

    trial_index: int
    statistic_sequence: np.ndarray
    flip: Optional[np.ndarray] = None


@dataclass
class CalibrationResult:
    """Threshold fitted to an ARL target."""

    threshold: float
    gamma: float
    method: str
    diagnostics: Dict[str, float] = field(default_factory=dict)
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.threshold > 0:
            raise CalibrationError(f"calibrated threshold {self.threshold} is not positive")

    def to_text(self) -> str:
        lines = [f"format={FORMAT_TAG}", f"threshold={self.threshold!r}",
                 f"gamma={self.gamma!r}", f"method={self.method}"]
        lines += [f"{k}={v}" for k, v in self.meta.items()]
        lines += [f"diag.{k}={v!r}" for k, v in self.diagnostics.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CalibrationResult":
        kv = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"calibration file line {n}: expected key=value")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        if kv.get("format") != FORMAT_TAG:
            raise ConfigError(f"unsupported calibration format {kv.get('format')!r}")
        try:
            diags = {k[5:]: float(v) for k, v in kv.items() if k.startswith("diag.")}
            meta = {k: v for k, v in kv.items()
                    if not k.startswith("diag.") and k not in ("format", "threshold", "gamma", "method")}
            return cls(float(kv["threshold"]), float(kv["gamma"]), kv["method"], diags, meta)
        except KeyError as err:
            raise ConfigError(f"calibration file lacks key {err.args[0]!r}") from None


# ---------------------------------------------------------------------------
# statistic paths
# ---------------------------------------------------------------------------

def _step_correlations(reference: ReferenceModel, B: np.ndarray, config: DetectorConfig,
                       rng) -> Tuple[np.ndarray, np.ndarray]:
    """Candidate correlations and weights for the buffer ``B`` ending at t."""
    if config.enhancement is not Enhancement.NONE:
        from .enhance import augmented_correlations

        return augmented_correlations(B, config, rng, reference.mode)
    t = B.shape[0]
    if config.variant is Variant.SHEWHART:
        corr, _ = suffix_correlations(B, 1, reference.mode)
        return corr, np.ones(1)
    corr, _ = suffix_correlations(B, t - 1, reference.mode)
    return corr, weight(t - 1 - np.arange(t - 1), reference.H)


def _buffers(X: np.ndarray, config: DetectorConfig):
    """Yield ``(t, buffer)`` for t = 2..M with the detector's buffer rule."""
    first = config.w + 1 if config.variant is Variant.SHEWHART else 2
    for t in range(first, X.shape[0] + 1):
        n_rows, _ = candidate_range(config.variant, t, config.w)
        yield t, X[t - n_rows:t]


def statistic_path(reference: ReferenceModel, stream, config: DetectorConfig,
                   rng=None, kind: Optional[Kind] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Statistic at every step ``t = 2..M`` of a stream, ignoring thresholds.

    Returns
    -------
    values : ndarray, shape (M - 1,)
        ``S_t``; 0 where the variant is undefined.
    argmax : ndarray of int, shape (M - 1,)
        Maximising candidate ``t'`` (0 where undefined).
    """
    kind = Kind(kind or config.kind)
    if kind is Kind.COMBINED:
        raise ConfigError("statistic paths are computed per component (sum or max)")
    rng = np.random.default_rng() if rng is None else rng
    X = reference.standardize(as_array(stream))
    M = X.shape[0]
    vals = np.zeros(M - 1)
    arg = np.zeros(M - 1, dtype=int)
    for t, B in _buffers(X, config):
        corr, wts = _step_correlations(reference, B, config, rng)
        sums, maxs = reduce_candidates(corr, reference.r0_vech, None, reference.H, False)
        s = (sums if kind is Kind.SUM else maxs) * wts
        k = int(np.nanargmax(s))
        vals[t - 2] = s[k]
        arg[t - 2] = t - B.shape[0] + 1 + k
    return vals, arg


@numba.njit(cache=True)
def _flip_max_kernel(a, C, wts, order, bound, R, ii, jj, out):  # pragma: no cover - compiled
    q = R.shape[0]
    n_cand, N = C.shape
    for l in range(q):
        best = -1.0
        for c in range(n_cand):
            m = 0.0
            wc = wts[c]
            if bound[c, 0] * wc <= best:
                continue
            for r in range(N):
                if bound[c, r] <= m:
                    break
                e = order[c, r]
                d = a[e] - R[l, ii[e]] * R[l, jj[e]] * C[c, e]
                d2 = d * d
                if d2 > m:
                    m = d2
            v = m * wc
            if v > best:
                best = v
        out[l] = best


def flipped_step_values(a: np.ndarray, corr: np.ndarray, wts: np.ndarray, R: np.ndarray,
                        kind: Kind, S: Optional[np.ndarray] = None) -> np.ndarray:
    """Statistic of one step for every sign-flip trial.

    Parameters
    ----------
    a : ndarray, shape (N,)
        Reference correlations.
    corr : ndarray, shape (n_cand, N)
        Unflipped candidate correlations.
    wts : ndarray, shape (n_cand,)
    R : ndarray of float, shape (q, p)
        Rademacher vectors.
    kind : Kind
    S : ndarray, shape (N, q), optional
        Precomputed ``a * vech(r r^T)`` columns (sum kind).
    """
    p = R.shape[1]
    ii, jj = vech_index(p)
    if kind is Kind.SUM:
        if S is None:
            S = (R[:, ii] * R[:, jj]).T * a[:, None]
        base = (a ** 2).sum() + (corr ** 2).sum(axis=1)
        vals = (base[:, None] - 2.0 * (corr @ S)) * wts[:, None]
        return vals.max(axis=0)
    bnd = (np.abs(a) + np.abs(corr)) ** 2
    order = np.argsort(-bnd, axis=1, kind="stable")
    bound = np.take_along_axis(bnd, order, axis=1)
    out = np.empty(R.shape[0])
    _flip_max_kernel(a, np.ascontiguousarray(corr), np.ascontiguousarray(wts, dtype=float),
                     order, bound, R, ii.astype(np.int64), jj.astype(np.int64), out)
    return out


def rademacher(q: int, p: int, rng) -> np.ndarray:
    """``q`` independent Rademacher vectors of length ``p`` (as floats)."""
    return rng.choice(np.array([-1.0, 1.0]), size=(q, p))


def signflip_sequences(prechange_data, reference: ReferenceModel, config: DetectorConfig,
                       q: int, rng=None, method: str = "equivariant",
                       flips: Optional[np.ndarray] = None) -> List[SignFlipTrial]:
    """Sign-flip calibration trials on one pre-change stream.

    Parameters
    ----------
    prechange_data : array_like, shape (M, p)
    reference : ReferenceModel
        Kept fixed (unflipped) across trials.
    config : DetectorConfig
        ``kind`` must be SUM or MAX; calibrate combined detectors per part.
    q : int
        Number of trials.
    rng : numpy.random.Generator
    method : {"equivariant", "direct"}
        Shared-correlation engine or literal recomputation per trial.
    flips : ndarray, shape (q, p), optional
        Rademacher vectors to use instead of random draws.
    """
    if config.kind is Kind.COMBINED:
        raise ConfigError("calibrate the sum and max parts separately")
    rng = np.random.default_rng() if rng is None else rng
    X = as_array(prechange_data)
    M, p = X.shape
    if p != reference.p:
        raise ConfigError(f"data dimension {p} differs from reference dimension {reference.p}")
    if M < config.w + 2:
        raise ConfigError(f"need at least w+2 = {config.w + 2} pre-change observations, got {M}")
    if q < 1:
        raise ConfigError("q must be positive")
    config.check_dimension(p)
    R = rademacher(q, p, rng) if flips is None else np.asarray(flips, dtype=float)
    if R.shape != (q, p) or not np.all(np.abs(R) == 1):
        raise ConfigError("flips must be a (q, p) array of +-1")
    out = np.zeros((q, M - 1))
    if method == "direct":
        for l in range(q):
            out[l], _ = statistic_path(reference, X * R[l], config, rng)
    elif method == "equivariant":
        Z = reference.standardize(X)
        a = reference.r0_vech
        ii, jj = vech_index(p)
        S = (R[:, ii] * R[:, jj]).T * a[:, None] if config.kind is Kind.SUM else None
        for t, B in _buffers(Z, config):
            corr, wts = _step_correlations(reference, B, config, rng)
            if np.isnan(corr).any():
                keep = ~np.isnan(corr).any(axis=1)
                if not keep.any():
                    raise ConfigError(f"every candidate window at t={t} is degenerate")
                corr, wts = corr[keep], wts[keep]
            out[:, t - 2] = flipped_step_values(a, corr, wts, R, config.kind, S)
    else:
        raise ConfigError(f"unknown sign-flip method {method!r}")
    return [SignFlipTrial(l + 1, out[l], R[l]) for l in range(q)]


def montecarlo_sequences(sampler: Callable[[int, np.random.Generator], np.ndarray],
                         reference: ReferenceModel, config: DetectorConfig, q: int, M: int,
                         rng=None) -> List[SignFlipTrial]:
    """Calibration trials from independent simulated pre-change streams.

    Needed when the pre-change correlation has nonzero entries: flipping
    signs then changes the pre-change law and sign-flip trials are invalid.
    """
    rng = np.random.default_rng() if rng is None else rng
    trials = []
    for l in range(q):
        vals, _ = statistic_path(reference, sampler(M, rng), config, rng)
        trials.append(SignFlipTrial(l + 1, vals))
    return trials


# ---------------------------------------------------------------------------
# thresholds from trials
# ---------------------------------------------------------------------------

def pooled_values(trials: Sequence[SignFlipTrial], w: int) -> np.ndarray:
    """All statistic values after dropping the first ``w`` of each trial."""
    if not trials:
        raise ConfigError("at least one trial is required")
    return np.concatenate([np.asarray(tr.statistic_sequence)[w:] for tr in trials])


def gaussian_tail_fit(values: np.ndarray, tail_fraction: float = 0.05) -> Tuple[float, float]:
    """Location and scale of a normal law matched to the upper tail.

    Fits the ordered top ``tail_fraction`` of ``values`` against normal
    quantiles of their plotting positions by least squares.
    """
    x = np.sort(values)
    n = x.size
    k = max(int(np.ceil(tail_fraction * n)), 3)
    ranks = np.arange(n - k + 1, n + 1)
    z = stats.norm.ppf((ranks - 0.5) / n)
    slope, intercept = np.polyfit(z, x[n - k:], 1)
    return float(intercept), float(slope)


def threshold_from_sequences(trials: Sequence[SignFlipTrial], gamma: float, w: int,
                             min_crossings: int = 20, tail_fraction: float = 0.05,
                             max_extrapolation: float = 3.0) -> CalibrationResult:
    """Threshold whose per-step crossing rate on the trials is ``1 / gamma``.

    Parameters
    ----------
    trials : sequence of SignFlipTrial
    gamma : float
        ARL target, > 1.
    w : int
        Burn-in length dropped from each trial.
    min_crossings : int
        Use the empirical quantile when at least this many pooled values are
        expected above it; otherwise extrapolate a Gaussian tail fit.
    tail_fraction : float
        Fraction of pooled values used by the tail fit.
    max_extrapolation : float
        The tail fit is flagged (``diagnostics["flagged"] = 1``) when the
        target normal quantile exceeds that of the largest pooled value by
        more than this many units; beyond twice that it is an error.

    Examples
    --------
    >>> import numpy as np
    >>> tr = [SignFlipTrial(1, np.full(50, 3.0))]
    >>> threshold_from_sequences(tr, 10, 5).threshold
    3.0
    """
    if not gamma > 1:
        raise ConfigError("gamma must exceed 1")
    pooled = pooled_values(trials, w)
    n = pooled.size
    if n == 0:
        raise ConfigError("no statistic values remain after burn-in")
    level = 1.0 - 1.0 / gamma
    diag: Dict[str, float] = {"pooled": float(n), "trials": float(len(trials)),
                              "expected_crossings": n / gamma}
    if n / gamma >= min_crossings or np.ptp(pooled) == 0:
        b = float(np.quantile(pooled, level))
        diag["crossing_rate"] = float(np.mean(pooled >= b))
        method = "EmpiricalQuantile"
    else:
        loc, scale = gaussian_tail_fit(pooled, tail_fraction)
        if not scale > 0:
            raise CalibrationError("tail fit produced a non-positive scale")
        z_target = stats.norm.ppf(level)
        z_top = stats.norm.ppf((n - 0.5) / n)
        b = loc + scale * z_target
        diag.update(tail_loc=loc, tail_scale=scale, z_target=float(z_target),
                    z_top=float(z_top), flagged=float(z_target - z_top > max_extrapolation))
        if z_target - z_top > 2 * max_extrapolation:
            raise CalibrationError(
                f"gamma={gamma:g} needs extrapolation {z_target - z_top:.2f} normal units "
                "beyond the pooled sample")
        diag["crossing_rate"] = float(np.mean(pooled >= b))
        method = "TailFit"
    return CalibrationResult(b, float(gamma), method, diag)


# ---------------------------------------------------------------------------
# analytic run length
# ---------------------------------------------------------------------------

def zeta(y):
    """Overshoot correction ``(2/y)(Phi(y/2) - 1/2) / ((y/2) Phi(y/2) + phi(y/2))``.

    Examples
    --------
    >>> round(zeta(1.0), 4)
    0.5487
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ConfigError("zeta is defined for y > 0")
    h = np.maximum(y, 1e-300) / 2
    val = (1.0 / h) * (stats.norm.cdf(h) - 0.5) / (h * stats.norm.cdf(h) + stats.norm.pdf(h))
    val = np.where(y <= 1e-8, 1.0, val)
    return float(val) if val.ndim == 0 else val


def _zeta_scalar(y: float) -> float:
    if y <= 1e-8:
        return 1.0
    h = y / 2
    cdf = 0.5 * math.erfc(-h / math.sqrt(2))
    pdf = math.exp(-h * h / 2) / math.sqrt(2 * math.pi)
    return (cdf - 0.5) / h / (h * cdf + pdf)


def log_arl_approx(inp: ArlApproxInput) -> float:
    """Natural log of :func:`arl_approx` (safe for large thresholds)."""
    if not inp.b > inp.mu:
        raise ConfigError(f"threshold {inp.b} must exceed the pre-change mean {inp.mu}")
    I, _ = integrate.quad(lambda y: y * _zeta_scalar(y) ** 2, inp.xi1, inp.xi2,
                          epsabs=0, epsrel=1e-10, limit=200)
    if not I > 0:
        raise CalibrationError("run-length integral is not positive")
    return (math.log(0.5) + 0.5 * math.log(2 * math.pi / inp.kappa) + inp.kappa / 2
            - math.log(I))


def arl_approx(inp: ArlApproxInput) -> float:
    """Approximate pre-change average run length for threshold ``inp.b``."""
    return math.exp(log_arl_approx(inp))


def arl_minimizer(mu: float, sigma_d: float, w: int) -> float:
    """Threshold at which the approximation is smallest; it increases beyond."""
    f = lambda z: log_arl_approx(ArlApproxInput(mu + z * sigma_d, mu, sigma_d, w))
    res = optimize.minimize_scalar(f, bounds=(1e-3, 5.0), method="bounded",
                                   options={"xatol": 1e-8})
    return mu + res.x * sigma_d


def threshold_from_arl(gamma: float, moments: Tuple[float, float], w: int,
                       upper_sd: float = 50.0) -> float:
    """Invert the approximation: threshold with approximate ARL ``gamma``.

    Root finding runs on the increasing branch, from the minimiser of the
    approximation to ``mu + upper_sd * sigma_d``.
    """
    if not gamma > 1:
        raise ConfigError("gamma must exceed 1")
    mu, sd = moments
    lo = arl_minimizer(mu, sd, w)
    hi = mu + upper_sd * sd
    g = lambda b: log_arl_approx(ArlApproxInput(b, mu, sd, w)) - math.log(gamma)
    glo, ghi = g(lo), g(hi)
    if glo > 0:
        raise CalibrationError(
            f"gamma={gamma:g} is below the smallest approximate ARL "
            f"{math.exp(glo + math.log(gamma)):.4g} (bracket [{lo:.6g}, {hi:.6g}])")
    if ghi < 0:
        raise CalibrationError(f"gamma={gamma:g} lies beyond the bracket [{lo:.6g}, {hi:.6g}]")
    return optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-12)


# ---------------------------------------------------------------------------
# pre-change moments
# ---------------------------------------------------------------------------

def gaussian_product_fourth_central(rho: float) -> float:
    """``E[(x y - rho)^4]`` for standard bivariate normal ``(x, y)``."""
    return 9 + 42 * rho ** 2 + 9 * rho ** 4


def entry_moments(moments: MomentSpec, H: int, w: int,
                  fourth_central: Optional[float] = None) -> Tuple[float, float]:
    """Mean and standard deviation of one diff-vector entry before the change.

    Uses the known-moment estimator with ``H + 1`` reference and ``w + 1``
    window observations. The variance is exact for that estimator:
    ``2 k2^2 (1/n0 + 1/n1)^2 + k4 (1/n0^3 + 1/n1^3)`` with ``k2``, ``k4`` the
    second and fourth cumulants of the coordinate product.
    """
    from .corrstat import expected_v_known_mean

    n0, n1 = H + 1, w + 1
    k2 = moments.beta20 - moments.rho0 ** 2
    m4 = gaussian_product_fourth_central(moments.rho0) if fourth_central is None else fourth_central
    k4 = m4 - 3 * k2 ** 2
    mu = expected_v_known_mean(MomentSpec(moments.rho0, moments.rho0, moments.beta20,
                                          moments.beta20), H, n1)
    var = 2 * k2 ** 2 * (1 / n0 + 1 / n1) ** 2 + k4 * (1 / n0 ** 3 + 1 / n1 ** 3)
    return mu, math.sqrt(var)


def empirical_moments(kind, p: int, w: int, H: int, n_mc: int = 2000, rng=None,
                      data: Optional[np.ndarray] = None,
                      corr: Optional[np.ndarray] = None,
                      mode: str = "full") -> Tuple[float, float]:
    """Monte Carlo mean and sd of the single-window (Shewhart) statistic.

    Each replication draws an independent reference of ``H + 1`` and a
    window of ``w + 1`` observations, either Gaussian with correlation
    ``corr`` (identity by default) or as disjoint random rows of ``data``.
    ``mode`` selects the correlation estimator.
    """
    kind = Kind(kind)
    rng = np.random.default_rng() if rng is None else rng
    if data is not None:
        data = as_array(data)
        if data.shape[0] < H + w + 2:
            raise ConfigError(f"empirical moments need at least H+w+2 = {H + w + 2} rows")
        p = data.shape[1]
    L = None if corr is None else np.linalg.cholesky(corr)
    vals = np.empty(n_mc)
    for r in range(n_mc):
        if data is None:
            Z = rng.standard_normal((H + w + 2, p))
            if L is not None:
                Z = Z @ L.T
        else:
            Z = data[rng.choice(data.shape[0], H + w + 2, replace=False)]
        ref = build_reference(Z[:H + 1], mode)
        c, _ = suffix_correlations(ref.standardize(Z[H + 1:]), 1, mode)
        v = (ref.r0_vech - c[0]) ** 2
        vals[r] = v.sum() if kind is Kind.SUM else v.max()
    return float(vals.mean()), float(vals.std(ddof=1))


def prechange_moments(kind, p: int, w: int, H: int, source: Optional[str] = None,
                      variant=Variant.SHEWHART, moments: Optional[MomentSpec] = None,
                      fourth_central: Optional[float] = None, **mc) -> Tuple[float, float]:
    """Pre-change mean and sd of a statistic for the run-length approximation.

    Parameters
    ----------
    kind : Kind
        SUM or MAX.
    p, w, H : int
    source : {"analytic", "empirical"}, optional
        Default: analytic for SUM, empirical for MAX.
    variant : Variant
        SHEWHART returns the moments of the unweighted single-window
        statistic; WINDOW multiplies them by the weight of the ``t' = t - w``
        candidate.
    moments : MomentSpec, optional
        Product moments for the analytic route (Gaussian, zero correlation by
        default).
    **mc
        Passed to :func:`empirical_moments`.

    Notes
    -----
    The analytic sum moments treat entries as uncorrelated:
    ``N mu_entry`` and ``sqrt(N) sd_entry`` with ``N = p(p-1)/2``. The
    analytic max route returns the per-entry moments unchanged.
    """
    kind = Kind(kind)
    if kind is Kind.COMBINED:
        raise ConfigError("moments are defined per part (sum or max)")
    source = source or ("analytic" if kind is Kind.SUM else "empirical")
    if source == "analytic":
        mu, sd = entry_moments(moments or MomentSpec.gaussian(0.0), H, w, fourth_central)
        if kind is Kind.SUM:
            N = n_pairs(p)
            mu, sd = N * mu, math.sqrt(N) * sd
    elif source == "empirical":
        mu, sd = empirical_moments(kind, p, w, H, **mc)
    else:
        raise ConfigError(f"unknown moment source {source!r}")
    if not sd > 0:
        raise CalibrationError("pre-change statistic has zero spread")
    if Variant(variant) is Variant.WINDOW:
        k = weight(w, H)
        mu, sd = k * mu, k * sd
    elif Variant(variant) is Variant.FULL:
        raise ConfigError("the approximation covers window-limited and Shewhart variants")
    return mu, sd


def theoretical_threshold(kind, variant, gamma: float, p: int, w: int, H: int,
                          source: Optional[str] = None, **kw) -> CalibrationResult:
    """Threshold from inverting the analytic run-length approximation."""
    mu, sd = prechange_moments(kind, p, w, H, source=source, variant=variant, **kw)
    b = threshold_from_arl(gamma, (mu, sd), w)
    return CalibrationResult(b, float(gamma), "TheoreticalInversion",
                             {"mu": mu, "sigma_d": sd})


# ---------------------------------------------------------------------------
# detection delay
# ---------------------------------------------------------------------------

def edd_approx(b: float, strength: SignalStrength, kind) -> float:
    """First-order detection delay ``b / delta`` (sum: delta1, max: delta2)."""
    kind = Kind(kind)
    d = strength.delta1 if kind is Kind.SUM else strength.delta2
    if kind is Kind.COMBINED:
        raise ConfigError("delay approximation is defined per part")
    if not d > 0:
        raise ConfigError("signal strength is zero")
    return b / d


def window_guidance(b: float, strength: SignalStrength) -> float:
    """Smallest window size covering the predicted delay of both parts."""
    d = min(strength.delta1, strength.delta2)
    if not d > 0:
        raise ConfigError("signal strength is zero")
    return b / d
