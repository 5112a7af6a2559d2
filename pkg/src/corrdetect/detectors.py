"""Sum-, max- and combined-type detection statistics and their stopping rules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corrstat import ReferenceModel, WindowBuffer, as_array, sample_correlation, suffix_correlations
from .model import (
    ConfigError,
    DegenerateWindowError,
    DetectorConfig,
    Enhancement,
    Kind,
    Variant,
    vech,
)


def weight(t_minus_tprime, H: int):
    """Variance-balancing weight ``k H / (H + k)`` with ``k = t - t'``.

    Examples
    --------
    >>> round(weight(20, 100), 4)
    16.6667
    """
    k = np.asarray(t_minus_tprime, dtype=float)
    if np.any(k < 1) or H < 1:
        raise ConfigError("weight needs t - t' >= 1 and H >= 1")
    out = k * H / (H + k)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DetectionState:
    """Outcome of one detector step.

    Attributes
    ----------
    t : int
        Current time.
    statistic : float
        Value of the configured statistic (the threshold-normalised ratio for
        the combined kind). ``0`` on steps that are not evaluated.
    argmax_candidate : int
        Candidate change point ``t'`` achieving the maximum, 0 if none.
    alarmed : bool
    component_values : tuple of float
        (sum part, max part); NaN for a part that was not computed.
    evaluated : bool
        Whether the statistic was computed at this step.
    """

    t: int
    statistic: float
    argmax_candidate: int
    alarmed: bool = False
    component_values: Tuple[float, float] = (np.nan, np.nan)
    evaluated: bool = True


def reduce_candidates(corr: np.ndarray, r0: np.ndarray, counts: np.ndarray,
                      H: int, weighted: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Per-candidate sum and max statistics.

    Parameters
    ----------
    corr : ndarray, shape (n_cand, N)
        Candidate window correlations in vech order (NaN rows are skipped).
    r0 : ndarray, shape (N,)
        Reference correlations.
    counts : ndarray, shape (n_cand,) or None
        Number of observations in each candidate window (needed only when
        ``weighted``).
    weighted : bool
        Multiply by :func:`weight` of ``counts - 1``.
    """
    v = (r0 - corr) ** 2
    sums = v.sum(axis=1)
    maxs = v.max(axis=1)
    if weighted:
        wts = weight(counts - 1, H)
        sums = sums * wts
        maxs = maxs * wts
    return sums, maxs


def _pick(values: np.ndarray) -> Tuple[float, int]:
    if np.all(np.isnan(values)):
        raise DegenerateWindowError(-1, "every candidate window is degenerate")
    k = int(np.nanargmax(values))  # first maximiser, i.e. the earliest t'
    return float(values[k]), k


def candidate_range(variant: Variant, t: int, w: int) -> Tuple[int, bool]:
    """Number of buffered rows used and whether candidates are weighted."""
    if variant is Variant.SHEWHART:
        if t < w + 1:
            raise ConfigError(f"Shewhart statistics need t >= w+1 = {w + 1}, got t={t}")
        return w + 1, False
    if t < 2:
        raise ConfigError("at least two observations are needed")
    if variant is Variant.FULL:
        return t, True
    return min(t, w + 1), True


def _window_values(reference: ReferenceModel, X: np.ndarray, variant: Variant,
                   w: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Sum/max values for every candidate t' of the last rows of ``X``.

    The third value is the row offset in ``X`` of the first candidate.
    """
    t = X.shape[0]
    n_rows, weighted = candidate_range(variant, t, w)
    B = X[t - n_rows:]
    n_starts = 1 if variant is Variant.SHEWHART else n_rows - 1
    corr, _ = suffix_correlations(B, n_starts, reference.mode)
    counts = np.arange(n_rows, n_rows - n_starts, -1)
    sums, maxs = reduce_candidates(corr, reference.r0_vech, counts, reference.H, weighted)
    return sums, maxs, t - n_rows


def evaluate_statistic(kind, variant, reference: ReferenceModel, history,
                       config: DetectorConfig) -> DetectionState:
    """Evaluate a sum- or max-type statistic at the last time of ``history``.

    Parameters
    ----------
    kind : Kind
        ``SUM`` or ``MAX``.
    variant : Variant
    reference : ReferenceModel
    history : array_like, shape (t, p)
        Raw observations ``x_1 .. x_t``.
    config : DetectorConfig
        Supplies ``w`` (and nothing else is read).

    Returns
    -------
    DetectionState
        ``alarmed`` is left False; stopping rules live in :class:`Detector`.
    """
    kind, variant = Kind(kind), Variant(variant)
    if kind is Kind.COMBINED:
        raise ConfigError("use combined_statistic for the combined kind")
    X = reference.standardize(as_array(history))
    if X.shape[1] != reference.p:
        raise ConfigError(f"history has dimension {X.shape[1]}, reference {reference.p}")
    sums, maxs, offset = _window_values(reference, X, variant, config.w)
    val, k = _pick(sums if kind is Kind.SUM else maxs)
    comp = (val, np.nan) if kind is Kind.SUM else (np.nan, val)
    return DetectionState(X.shape[0], val, offset + 1 + k, False, comp)


def combined_statistic(sum_state: DetectionState, max_state: DetectionState,
                       b1: float, b2: float) -> DetectionState:
    """Maximum of the threshold-normalised sum and max statistics.

    The alarm fires when the ratio reaches 1, i.e. when either part crosses
    its own threshold.
    """
    if not (b1 > 0 and b2 > 0):
        raise ConfigError("both thresholds must be positive")
    if sum_state.t != max_state.t:
        raise ConfigError("states refer to different times")
    r1, r2 = sum_state.statistic / b1, max_state.statistic / b2
    stat = max(r1, r2)
    cand = sum_state.argmax_candidate if r1 >= r2 else max_state.argmax_candidate
    alarm = bool(sum_state.statistic >= b1 or max_state.statistic >= b2)
    return DetectionState(sum_state.t, stat, cand, alarm,
                          (sum_state.statistic, max_state.statistic))


def is_evaluation_step(t: int, config: DetectorConfig) -> bool:
    """Whether the stopping rule inspects the statistic at time ``t``."""
    first = config.w + 1 if config.variant is Variant.SHEWHART else 2
    if t < first:
        return False
    if config.lag == 1:
        return True
    return t > config.w and (t - config.w) % config.lag == 0


def crossing(config: DetectorConfig, sum_value: float, max_value: float) -> bool:
    """Stopping rule: statistic at least threshold plus noise margin."""
    m = config.noise_margin
    if config.kind is Kind.SUM:
        return sum_value >= config.threshold_sum + m
    if config.kind is Kind.MAX:
        return max_value >= config.threshold_max + m
    return sum_value >= config.threshold_sum + m or max_value >= config.threshold_max + m


def make_state(config: DetectorConfig, t: int, sums: np.ndarray, maxs: np.ndarray,
               first: int) -> DetectionState:
    """Collapse per-candidate values into the configured detection state."""
    kind = config.kind
    s_val, s_k = _pick(sums) if kind is not Kind.MAX else (np.nan, 0)
    m_val, m_k = _pick(maxs) if kind is not Kind.SUM else (np.nan, 0)
    alarmed = crossing(config, s_val, m_val)
    if kind is Kind.SUM:
        return DetectionState(t, s_val, first + s_k, alarmed, (s_val, np.nan))
    if kind is Kind.MAX:
        return DetectionState(t, m_val, first + m_k, alarmed, (np.nan, m_val))
    r1, r2 = s_val / config.threshold_sum, m_val / config.threshold_max
    cand = first + (s_k if r1 >= r2 else m_k)
    return DetectionState(t, max(r1, r2), cand, alarmed, (s_val, m_val))


class Detector:
    """Online detector driven one observation at a time.

    Parameters
    ----------
    reference : ReferenceModel
    config : DetectorConfig
    rng : numpy.random.Generator, optional
        Random source for SMOTE/knockoff augmentation.

    Examples
    --------
    >>> import numpy as np
    >>> from corrdetect.corrstat import build_reference
    >>> rng = np.random.default_rng(0)
    >>> ref = build_reference(rng.standard_normal((101, 5)))
    >>> det = Detector(ref, DetectorConfig(w=10, threshold_sum=np.inf))
    >>> states = [det.step(x) for x in rng.standard_normal((30, 5))]
    >>> any(s.alarmed for s in states)
    False
    """

    def __init__(self, reference: ReferenceModel, config: DetectorConfig, rng=None):
        config.check_dimension(reference.p)
        if config.enhancement is not Enhancement.NONE and config.variant is Variant.FULL:
            raise ConfigError("augmentation is defined for window-limited and Shewhart variants")
        if config.H != reference.H:
            raise ConfigError(f"config H={config.H} differs from reference H={reference.H}")
        self.reference = reference
        self.config = config
        self.rng = np.random.default_rng() if rng is None else rng
        cap = None if config.variant is Variant.FULL else config.w + 1
        self.buffer = WindowBuffer(cap, reference.p)
        self.alarm_time: Optional[int] = None

    @property
    def t(self) -> int:
        return self.buffer.last_time

    def step(self, x) -> DetectionState:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.reference.p,):
            raise ConfigError(f"observation has dimension {x.size}, expected {self.reference.p}")
        if not np.all(np.isfinite(x)):
            raise ConfigError(f"non-finite observation at t={self.t + 1}")
        self.buffer.append(self.reference.standardize(x))
        t = self.t
        cfg = self.config
        if not is_evaluation_step(t, cfg):
            return DetectionState(t, 0.0, 0, False, evaluated=False)
        X = self.buffer.array()
        if cfg.enhancement is Enhancement.NONE:
            sums, maxs, offset = _window_values(self.reference, X, cfg.variant, cfg.w)
        else:
            from .enhance import enhanced_values

            sums, maxs, offset = enhanced_values(self.reference, X, cfg, self.rng)
        state = make_state(cfg, t, sums, maxs, t - X.shape[0] + 1 + offset)
        if state.alarmed and self.alarm_time is None:
            self.alarm_time = t
        return state

    def run(self, stream, stop_at_alarm: bool = True) -> List[DetectionState]:
        """Feed a whole stream; evaluated states only."""
        out = []
        for x in as_array(stream):
            s = self.step(x)
            if s.evaluated:
                out.append(s)
                if s.alarmed and stop_at_alarm:
                    break
        return out


def stopping_time(reference: ReferenceModel, config: DetectorConfig, stream,
                  rng=None) -> Optional[int]:
    """First alarm time on ``stream``, or None if it never alarms."""
    det = Detector(reference, config, rng)
    for x in as_array(stream):
        if det.step(x).alarmed:
            return det.t
    return None


# ---------------------------------------------------------------------------
# subset scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubsetSpec:
    """Family of coordinate subsets, stored 0-based."""

    subsets: Tuple[Tuple[int, ...], ...]
    p: int

    def __post_init__(self):
        subs = tuple(tuple(int(i) for i in s) for s in self.subsets)
        if not subs:
            raise ConfigError("at least one subset is required")
        for k, s in enumerate(subs):
            if len(s) < 2:
                raise ConfigError(f"subset {k + 1} has fewer than 2 coordinates")
            if min(s) < 0 or max(s) >= self.p:
                raise ConfigError(f"subset {k + 1} has an index outside 1..{self.p}")
            if len(set(s)) != len(s):
                raise ConfigError(f"subset {k + 1} repeats an index")
        object.__setattr__(self, "subsets", subs)

    def __len__(self) -> int:
        return len(self.subsets)

    @classmethod
    def from_one_based(cls, subsets: Iterable[Sequence[int]], p: int) -> "SubsetSpec":
        return cls(tuple(tuple(int(i) - 1 for i in s) for s in subsets), p)

    def one_based(self) -> List[List[int]]:
        return [[i + 1 for i in s] for s in self.subsets]


def grid_subsets(rows: int, cols: int, block_rows: int, block_cols: int,
                 stride_rows: Optional[int] = None,
                 stride_cols: Optional[int] = None) -> SubsetSpec:
    """Rectangular blocks of a ``rows x cols`` grid of coordinates.

    Coordinates are numbered row by row. The default strides equal the block
    size (non-overlapping tiles); stride 1 gives every sliding position, e.g.
    8x8 blocks on a 9x23 grid produce 2 x 16 = 32 subsets.
    """
    if not (1 <= block_rows <= rows and 1 <= block_cols <= cols):
        raise ConfigError("block must fit inside the grid")
    if block_rows * block_cols < 2:
        raise ConfigError("blocks must contain at least 2 coordinates")
    sr = block_rows if stride_rows is None else stride_rows
    sc = block_cols if stride_cols is None else stride_cols
    if sr < 1 or sc < 1:
        raise ConfigError("strides must be positive")
    out = []
    for r0 in range(0, rows - block_rows + 1, sr):
        for c0 in range(0, cols - block_cols + 1, sc):
            out.append(tuple((r0 + a) * cols + c0 + b
                             for a in range(block_rows) for b in range(block_cols)))
    return SubsetSpec(tuple(out), rows * cols)


def subset_scan(reference: ReferenceModel, window, subsets: SubsetSpec) -> Tuple[float, int]:
    """Maximum Shewhart sum statistic over coordinate subsets.

    Parameters
    ----------
    reference : ReferenceModel
    window : array_like, shape (w + 1, p)
    subsets : SubsetSpec

    Returns
    -------
    value : float
    index : int
        1-based index of the winning subset; ties go to the lowest index.
    """
    X = as_array(window)
    if X.shape[1] != reference.p or subsets.p != reference.p:
        raise ConfigError("subset scan inputs disagree on the dimension")
    X = reference.standardize(X)
    R0 = reference.R0_hat.entries
    best, arg = -np.inf, 0
    for k, s in enumerate(subsets.subsets):
        c = np.asarray(s)
        try:
            R = sample_correlation(X[:, c], mode=reference.mode).entries
        except DegenerateWindowError as err:
            raise DegenerateWindowError(int(c[err.coordinate]),
                                        f"subset {k + 1}: coordinate {c[err.coordinate] + 1} "
                                        "has zero sample variance") from None
        val = float(((vech(R0[np.ix_(c, c)]) - vech(R)) ** 2).sum())
        if val > best:
            best, arg = val, k + 1
    return best, arg
