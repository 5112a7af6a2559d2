"""Simulation lab: scenarios, stream generators, the exact CUSUM benchmark and
ARL/EDD experiments.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .corrstat import ReferenceModel, build_reference, sample_correlation
from .detectors import DetectionState, Detector
from .model import ConfigError, DetectorConfig, Enhancement, vech

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _floor_pow(p: int, a: float) -> int:
    return int(math.floor(p ** a + 1e-9))


def check_correlation(R: np.ndarray, name: str = "R", tol: float = 1e-10) -> np.ndarray:
    """Validate symmetry, unit diagonal and positive semidefiniteness."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ConfigError(f"{name} must be square")
    if not np.allclose(R, R.T, atol=1e-12):
        raise ConfigError(f"{name} is not symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-12):
        raise ConfigError(f"{name} must have a unit diagonal")
    lam = linalg.eigvalsh(R)[0]
    if lam < -tol:
        raise ConfigError(f"{name} is not positive semidefinite (smallest eigenvalue {lam:.4g})")
    return R


def _block(p: int, idx: slice, r: float) -> np.ndarray:
    R = np.eye(p)
    B = R[idx, idx]
    B[...] = r
    np.fill_diagonal(B, 1.0)
    return R


def case_matrices(case_id: int, p: int, r: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Pre- and post-change correlation matrices of the four simulation cases.

    Case 1: identity to equicorrelation ``r``. Case 2: identity to ``r`` on
    the leading ``floor(p/2)`` block. Case 3: ``-0.3`` to ``0.9`` on the
    leading ``floor(p^0.3)`` block. Case 4: ``0.3`` on the leading
    ``floor(p/2)`` block to ``0.5`` on the trailing block.
    """
    if p < 2:
        raise ConfigError("scenarios need p >= 2")
    h = p // 2
    if case_id in (2, 4) and h < 2:
        raise ConfigError(f"case {case_id} needs p >= 4")
    if case_id == 3 and _floor_pow(p, 0.3) < 2:
        raise ConfigError("case 3 needs floor(p^0.3) >= 2, i.e. p >= 11")
    if case_id == 1:
        if r <= -1.0 / (p - 1) + 1e-9:
            raise ConfigError(f"equicorrelation r={r} is not positive definite for p={p}")
        R0, R1 = np.eye(p), _block(p, slice(0, p), r)
    elif case_id == 2:
        R0, R1 = np.eye(p), _block(p, slice(0, h), r)
    elif case_id == 3:
        n = _floor_pow(p, 0.3)
        R0, R1 = _block(p, slice(0, n), -0.3), _block(p, slice(0, n), 0.9)
    elif case_id == 4:
        R0, R1 = _block(p, slice(0, h), 0.3), _block(p, slice(h, p), 0.5)
    else:
        raise ConfigError(f"unknown case {case_id}")
    return check_correlation(R0, "R0"), check_correlation(R1, "R1")


def block_matrices(p: int, n: int, r0: float, r1: float) -> Tuple[np.ndarray, np.ndarray]:
    """Leading ``n x n`` block changes from ``r0`` to ``r1`` (sparsity sweep)."""
    if not 2 <= n <= p:
        raise ConfigError("block size must be in [2, p]")
    return (check_correlation(_block(p, slice(0, n), r0), "R0"),
            check_correlation(_block(p, slice(0, n), r1), "R1"))


def dense_level(case_id: int, p: int) -> float:
    """Fraction of strictly lower-triangular entries that change."""
    if case_id == 1:
        return 1.0
    if case_id == 2:
        h = p // 2
        return h * (h - 1) / (p * (p - 1))
    if case_id == 3:
        n = _floor_pow(p, 0.3)
        return n * (n - 1) / (p * (p - 1))
    if case_id == 4:
        h = p // 2
        return (h * (h - 1) + (p - h) * (p - h - 1)) / (p * (p - 1))
    raise ConfigError(f"unknown case {case_id}")


def max_eigen_ratio(R0: np.ndarray, R1: np.ndarray) -> float:
    """Largest eigenvalue of ``R1 R0^-1``."""
    return float(linalg.eigh(R1, R0, eigvals_only=True)[-1])


def admissible_block_parameters(p: int, n: int, lo: float = 5.0, hi: float = 8.0,
                                step: float = 0.05) -> Tuple[float, float]:
    """Grid search for ``(r0, r1)`` with ``lo <= lambda_max(R1 R0^-1) <= hi``.

    Among admissible grid points the smallest ``|r0|`` wins, then the
    smallest ``|r1 - r0|``, then the smallest ``r1``.
    """
    grid = np.round(np.arange(-0.95, 0.95 + step / 2, step), 10)
    best = None
    for r0 in sorted(grid, key=abs):
        if best is not None and abs(r0) > abs(best[0]) + 1e-12:
            break
        for r1 in grid:
            try:
                R0, R1 = block_matrices(p, n, r0, r1)
            except ConfigError:
                continue
            if min(linalg.eigvalsh(R0)[0], linalg.eigvalsh(R1)[0]) <= 1e-8:
                continue
            lam = max_eigen_ratio(R0, R1)
            if lo <= lam <= hi:
                key = (abs(r0), abs(r1 - r0), r1)
                if best is None or key < (abs(best[0]), abs(best[1] - best[0]), best[1]):
                    best = (float(r0), float(r1))
    if best is None:
        raise ConfigError(f"no admissible (r0, r1) for p={p}, n={n}")
    return best


@dataclass(frozen=True)
class ScenarioSpec:
    """Pre/post-change correlation matrices and the sampling law."""

    R0: np.ndarray
    R1: np.ndarray
    distribution: str = "gaussian"
    df: float = 5.0
    case_id: Optional[int] = None
    r: Optional[float] = None

    def __post_init__(self):
        R0 = check_correlation(self.R0, "R0")
        R1 = check_correlation(self.R1, "R1")
        if R0.shape != R1.shape:
            raise ConfigError("R0 and R1 differ in dimension")
        if self.distribution not in ("gaussian", "t"):
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "t" and not self.df > 2:
            raise ConfigError("Student t needs df > 2 for a finite covariance")
        object.__setattr__(self, "R0", R0)
        object.__setattr__(self, "R1", R1)
        object.__setattr__(self, "_L0", _factor(R0))
        object.__setattr__(self, "_L1", _factor(R1))

    @property
    def p(self) -> int:
        return self.R0.shape[0]

    @classmethod
    def case(cls, case_id: int, p: int, r: float = 0.5, distribution: str = "gaussian",
             df: float = 5.0) -> "ScenarioSpec":
        R0, R1 = case_matrices(case_id, p, r)
        return cls(R0, R1, distribution, df, case_id, r)

    def sample(self, n: int, rng, post: bool = False) -> np.ndarray:
        """``n`` observations from the pre- or post-change law."""
        L = self._L1 if post else self._L0
        X = rng.standard_normal((n, self.p)) @ L.T
        if self.distribution == "t":
            chi = rng.chisquare(self.df, size=(n, 1))
            X *= math.sqrt((self.df - 2) / self.df) * np.sqrt(self.df / chi)
        return X

    def sampler(self, post: bool = False) -> Callable[[int, np.random.Generator], np.ndarray]:
        return lambda n, rng: self.sample(n, rng, post)


def _factor(R: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(R, lower=True)
    except linalg.LinAlgError:
        vals, vecs = linalg.eigh(R)
        if vals[0] < -1e-10:
            raise ConfigError("correlation matrix cannot be factorised") from None
        return vecs * np.sqrt(np.clip(vals, 0, None))


def gen_stream(spec: ScenarioSpec, nu: int, length: int, rng) -> np.ndarray:
    """Stream ``x_1 .. x_length`` with the change at time ``nu``.

    Rows before ``nu`` follow the pre-change law, rows from ``nu`` on the
    post-change law.
    """
    if nu < 1:
        raise ConfigError("change point must be at least 1")
    n_pre = min(nu - 1, length)
    parts = []
    if n_pre:
        parts.append(spec.sample(n_pre, rng, post=False))
    if length > n_pre:
        parts.append(spec.sample(length - n_pre, rng, post=True))
    return np.vstack(parts) if parts else np.empty((0, spec.p))


# ---------------------------------------------------------------------------
# exact CUSUM
# ---------------------------------------------------------------------------

@dataclass
class CusumOracle:
    """Gaussian likelihood-ratio CUSUM for a known pair of correlation matrices."""

    R0_inv: np.ndarray
    R1_inv: np.ndarray
    log_det_ratio: float
    b: float = np.inf
    W: float = 0.0
    t: int = 0

    @classmethod
    def from_matrices(cls, R0: np.ndarray, R1: np.ndarray, b: float = np.inf) -> "CusumOracle":
        _, ld0 = np.linalg.slogdet(R0)
        _, ld1 = np.linalg.slogdet(R1)
        return cls(np.linalg.inv(R0), np.linalg.inv(R1), 0.5 * (ld0 - ld1), b)

    @classmethod
    def from_scenario(cls, spec: ScenarioSpec, b: float = np.inf) -> "CusumOracle":
        if spec.distribution != "gaussian":
            raise ConfigError("the CUSUM benchmark needs Gaussian densities")
        return cls.from_matrices(spec.R0, spec.R1, b)

    def llr(self, x: np.ndarray) -> np.ndarray:
        """Log-likelihood ratio ``log f1(x) / f0(x)`` of one or many observations."""
        x = np.asarray(x, dtype=float)
        A = self.R0_inv - self.R1_inv
        return self.log_det_ratio + 0.5 * np.einsum("...i,ij,...j->...", x, A, x)

    def reset(self) -> None:
        self.W, self.t = 0.0, 0

    def step(self, x) -> DetectionState:
        W, alarmed = cusum_step(self, x)
        return DetectionState(self.t, W, 0, alarmed)


def cusum_step(oracle: CusumOracle, x) -> Tuple[float, bool]:
    """Reflected recursion ``W <- max(W, 0) + llr(x)``; alarm at ``W >= b``."""
    oracle.W = max(oracle.W, 0.0) + float(oracle.llr(x))
    oracle.t += 1
    return oracle.W, oracle.W >= oracle.b


def cusum_path(llrs: np.ndarray) -> np.ndarray:
    """Reflected CUSUM recursion over a sequence of log-likelihood ratios."""
    out = np.empty(len(llrs))
    W = 0.0
    for k, l in enumerate(llrs):
        W = max(W, 0.0) + l
        out[k] = W
    return out


def cusum_brute_force(llrs: np.ndarray) -> np.ndarray:
    """``max_{i <= t} sum_{k=i}^t llr_k`` for every t, by enumeration."""
    llrs = np.asarray(llrs, dtype=float)
    n = llrs.size
    out = np.empty(n)
    for t in range(n):
        out[t] = max(llrs[i:t + 1].sum() for i in range(t + 1))
    return out


def gaussian_kl(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """KL divergence ``D(N(0, Ra) || N(0, Rb))``."""
    p = Ra.shape[0]
    _, lda = np.linalg.slogdet(Ra)
    _, ldb = np.linalg.slogdet(Rb)
    return 0.5 * (np.trace(np.linalg.solve(Rb, Ra)) - p + ldb - lda)


def cusum_threshold(spec: ScenarioSpec, gamma: float, paths: int = 200, rng=None,
                    max_steps: Optional[int] = None, batch: int = 64) -> Tuple[float, dict]:
    """Monte Carlo threshold giving the CUSUM an ARL of ``gamma``.

    Runs ``paths`` pre-change paths until their running maximum reaches
    ``log(gamma)``, which is an upper bound for the answer since the ARL at
    threshold ``b`` is at least ``exp(b)``. The ARL curve is then read off
    the recorded first-passage times of every level and inverted.
    """
    rng = np.random.default_rng() if rng is None else rng
    ora = CusumOracle.from_scenario(spec)
    top = math.log(gamma)
    cap = int(max_steps or 20 * gamma)
    records: List[Tuple[np.ndarray, np.ndarray]] = []
    for _ in range(paths):
        W, best, t = 0.0, -np.inf, 0
        rt, rv = [], []
        while best < top and t < cap:
            ll = ora.llr(spec.sample(batch, rng))
            for l in ll:
                t += 1
                W = max(W, 0.0) + l
                if W > best:
                    best = W
                    rt.append(t)
                    rv.append(W)
                    if best >= top:
                        break
        records.append((np.asarray(rt), np.asarray(rv)))

    def arl(b: float) -> float:
        tot = 0.0
        for rt, rv in records:
            k = np.searchsorted(rv, b, side="left")
            tot += rt[k] if k < rv.size else cap
        return tot / len(records)

    lo, hi = 0.0, top
    if arl(hi) < gamma:
        logger.warning("CUSUM ARL at log(gamma) is below gamma; using log(gamma)")
        return top, {"arl_estimate": arl(hi), "paths": paths}
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if arl(mid) >= gamma:
            hi = mid
        else:
            lo = mid
    return hi, {"arl_estimate": arl(hi), "paths": paths}


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    """Stopping times of a batch of replications."""

    metric: str
    stopping_times: np.ndarray
    censored: np.ndarray
    seeds: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.stopping_times = np.asarray(self.stopping_times, dtype=float)
        self.censored = np.asarray(self.censored, dtype=bool)
        self.seeds = np.asarray(self.seeds)
        if self.stopping_times.size < 1:
            raise ConfigError("an experiment needs at least one replication")

    @property
    def replications(self) -> int:
        return int(self.stopping_times.size)

    @property
    def mean(self) -> float:
        return float(self.stopping_times.mean())

    @property
    def std_error(self) -> float:
        n = self.replications
        return float(self.stopping_times.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["seed", "stopping_time", "censored"])
        for s, t, c in zip(self.seeds, self.stopping_times, self.censored):
            wr.writerow([int(s), int(t), int(c)])
        wr.writerow([f"# {self.metric}", f"mean={self.mean:.6g}",
                     f"std_error={self.std_error:.6g}",
                     f"replications={self.replications}",
                     f"censored={int(self.censored.sum())}"])
        return buf.getvalue()


def replication_seeds(seed: int, replications: int) -> np.ndarray:
    """Per-replication seeds derived from one master seed.

    ``numpy.random.SeedSequence(seed).generate_state(replications)``; each
    replication then seeds its data generator with ``[s, 0]`` and its
    detector randomness with ``[s, 1]``, so different detectors see the same
    streams.
    """
    return np.random.SeedSequence(seed).generate_state(replications).astype(np.int64)


def _run_one(factory, spec: ScenarioSpec, nu: int, max_steps: int, s: int,
             chunk: int = 256) -> Tuple[int, bool]:
    data_rng = np.random.default_rng([s, 0])
    det = factory(np.random.default_rng([s, 1]))
    t = 0
    while t < max_steps:
        n = min(chunk, max_steps - t)
        X = gen_stream(spec, max(nu - t, 1), n, data_rng) if nu - t <= n else spec.sample(n, data_rng)
        for x in X:
            t += 1
            if det.step(x).alarmed:
                return t, False
    return max_steps, True


def run_experiment(factory: Callable, spec: ScenarioSpec, replications: int, seed: int,
                   nu: Optional[int], max_steps: int, metric: str, label: str = ""
                   ) -> ExperimentResult:
    seeds = replication_seeds(seed, replications)
    nu_eff = max_steps + 1 if nu is None else nu
    T, C = [], []
    for s in seeds:
        t, c = _run_one(factory, spec, nu_eff, max_steps, int(s))
        T.append(t)
        C.append(c)
    res = ExperimentResult(metric, T, C, seeds, label)
    if res.censored.all():
        raise ConfigError(f"all {replications} runs were censored at {max_steps} steps")
    if res.censored.any():
        logger.warning("%d of %d runs censored at %d steps", res.censored.sum(),
                       replications, max_steps)
    return res


def run_arl(factory: Callable, spec: ScenarioSpec, replications: int, max_steps: int,
            seed: int = 0, label: str = "") -> ExperimentResult:
    """Mean stopping time on pure pre-change streams.

    ``factory(rng)`` returns a fresh detector whose ``step(x)`` result has an
    ``alarmed`` attribute. Censored runs count as ``max_steps``.
    """
    return run_experiment(factory, spec, replications, seed, None, max_steps, "ARL", label)


def run_edd(factory: Callable, spec: ScenarioSpec, replications: int, seed: int = 0,
            max_steps: int = 100000, label: str = "") -> ExperimentResult:
    """Mean stopping time when the change occurs at time 1."""
    return run_experiment(factory, spec, replications, seed, 1, max_steps, "EDD", label)


def detector_factory(reference: ReferenceModel, config: DetectorConfig) -> Callable:
    """Factory for :class:`Detector` instances sharing one reference."""
    config.check_dimension(reference.p)
    return lambda rng: Detector(reference, config, rng)


def cusum_factory(spec: ScenarioSpec, b: float) -> Callable:
    def make(rng):
        return CusumOracle.from_scenario(spec, b)
    return make


# ---------------------------------------------------------------------------
# estimation quality of augmented windows
# ---------------------------------------------------------------------------

def estimation_error_study(p: int, w: int, R: np.ndarray, replications: int, rng,
                           k_neighbors: int = 5) -> dict:
    """Frobenius error of the window correlation with and without augmentation.

    Each replication draws ``w`` Gaussian observations with correlation
    ``R`` and compares ``||R - R_hat||_F`` for the original window, the
    SMOTE-augmented window and the knockoff-augmented window.

    Returns
    -------
    dict
        ``{"original": (mean, std), "smote": ..., "knockoff": ...}``
    """
    from .enhance import knockoff_augment, smote_augment

    L = _factor(check_correlation(R))
    errs = {"original": [], "smote": [], "knockoff": []}
    for _ in range(replications):
        X = (rng.standard_normal((w, p)) @ L.T).T
        cols = {"original": X,
                "smote": smote_augment(X, k_neighbors, rng).columns,
                "knockoff": knockoff_augment(X, rng).columns}
        for k, M in cols.items():
            Rh = sample_correlation(M.T).entries
            errs[k].append(np.linalg.norm(R - Rh))
    return {k: (float(np.mean(v)), float(np.std(v, ddof=1))) for k, v in errs.items()}
