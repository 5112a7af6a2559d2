import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from corrdetect.calibrate import (
    CalibrationError,
    CalibrationResult,
    SignFlipTrial,
    arl_approx,
    arl_minimizer,
    edd_approx,
    empirical_moments,
    entry_moments,
    gaussian_product_fourth_central,
    gaussian_tail_fit,
    log_arl_approx,
    montecarlo_sequences,
    prechange_moments,
    rademacher,
    signflip_sequences,
    statistic_path,
    theoretical_threshold,
    threshold_from_arl,
    threshold_from_sequences,
    window_guidance,
    zeta,
)
from corrdetect.corrstat import build_reference
from corrdetect.detectors import Detector
from corrdetect.model import ArlApproxInput, ConfigError, DetectorConfig, MomentSpec, SignalStrength


@pytest.fixture
def setup():
    rng = np.random.default_rng(99)
    ref = build_reference(rng.normal(2.0, 1.5, (41, 12)))
    data = rng.normal(2.0, 1.5, (60, 12))
    return ref, data


# ---------------------------------------------------------------- file format

def test_calibration_text_round_trip():
    res = CalibrationResult(12.5, 1000.0, "TailFit", {"z_top": 2.5, "flagged": 0.0},
                            {"kind": "sum", "w": "20"})
    back = CalibrationResult.from_text(res.to_text())
    assert back == res


@pytest.mark.parametrize("text", ["threshold=1\n", "format=other/9\nthreshold=1\n",
                                  "format=corrdetect-calibration/1\nthreshold=1\n",
                                  "format=corrdetect-calibration/1\nnonsense\n"])
def test_calibration_text_errors(text):
    with pytest.raises(ConfigError):
        CalibrationResult.from_text(text)


def test_calibration_threshold_must_be_positive():
    with pytest.raises(CalibrationError):
        CalibrationResult(0.0, 10.0, "EmpiricalQuantile")


# ---------------------------------------------------------------- statistic paths

def test_statistic_path_matches_detector(setup):
    ref, data = setup
    cfg = DetectorConfig(kind="max", w=6, H=40, threshold_max=np.inf)
    vals, arg = statistic_path(ref, data, cfg)
    states = Detector(ref, cfg).run(data)
    assert np.allclose(vals, [s.statistic for s in states])
    assert arg.tolist() == [s.argmax_candidate for s in states]


def test_rademacher_entries(rng):
    R = rademacher(50, 7, rng)
    assert R.shape == (50, 7) and set(np.unique(R)) == {-1.0, 1.0}


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_global_flip_leaves_sequence_unchanged(setup, sign):
    ref, data = setup
    cfg = DetectorConfig(w=6, H=40)
    vals, _ = statistic_path(ref, data, cfg)
    trials = signflip_sequences(data, ref, cfg, 1, flips=np.full((1, 12), sign))
    assert np.allclose(trials[0].statistic_sequence, vals, rtol=1e-10)


@pytest.mark.parametrize("kind", ["sum", "max"])
@pytest.mark.parametrize("variant", ["window", "shewhart"])
def test_equivariant_engine_matches_direct_recomputation(setup, kind, variant):
    ref, data = setup
    cfg = DetectorConfig(kind=kind, variant=variant, w=6, H=40)
    R = rademacher(15, 12, np.random.default_rng(1))
    fast = signflip_sequences(data, ref, cfg, 15, flips=R)
    slow = signflip_sequences(data, ref, cfg, 15, method="direct", flips=R)
    for a, b in zip(fast, slow):
        assert np.allclose(a.statistic_sequence, b.statistic_sequence, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("kind", ["sum", "max"])
def test_equivariant_engine_with_smote_matches_shared_draws(setup, kind):
    ref, data = setup
    cfg = DetectorConfig(kind=kind, w=6, H=40, enhancement="smote")
    R = rademacher(4, 12, np.random.default_rng(2))
    fast = signflip_sequences(data, ref, cfg, 4, np.random.default_rng(3), flips=R)
    for l in range(4):
        vals, _ = statistic_path(ref, data * R[l], cfg, np.random.default_rng(3))
        assert np.allclose(fast[l].statistic_sequence, vals, rtol=1e-8)


def test_signflip_input_validation(setup):
    ref, data = setup
    cfg = DetectorConfig(w=6, H=40)
    with pytest.raises(ConfigError):
        signflip_sequences(data[:7], ref, cfg, 3)
    with pytest.raises(ConfigError):
        signflip_sequences(data, ref, cfg.replace(kind="combined", threshold_max=1.0), 3)
    with pytest.raises(ConfigError):
        signflip_sequences(data, ref, cfg, 2, flips=np.zeros((2, 12)))
    with pytest.raises(ConfigError):
        signflip_sequences(data[:, :5], ref, cfg, 2)


def test_montecarlo_sequences_shape(setup):
    ref, _ = setup
    cfg = DetectorConfig(w=6, H=40)
    trials = montecarlo_sequences(lambda n, g: g.standard_normal((n, 12)), ref, cfg, 3, 30,
                                  np.random.default_rng(0))
    assert len(trials) == 3 and trials[0].statistic_sequence.shape == (29,)


# ---------------------------------------------------------------- thresholds

def test_constant_sequences_give_that_constant():
    tr = [SignFlipTrial(1, np.full(40, 2.5)), SignFlipTrial(2, np.full(40, 2.5))]
    assert threshold_from_sequences(tr, 1e6, 5).threshold == 2.5


def test_gamma_two_is_the_median(rng):
    tr = [SignFlipTrial(k, rng.exponential(size=500)) for k in range(10)]
    res = threshold_from_sequences(tr, 2, 20)
    assert res.method == "EmpiricalQuantile"
    pooled = np.concatenate([t.statistic_sequence[20:] for t in tr])
    assert res.threshold == pytest.approx(np.median(pooled))
    assert res.diagnostics["crossing_rate"] == pytest.approx(0.5, abs=1e-3)


def test_tail_fit_recovers_gaussian_quantile(rng):
    tr = [SignFlipTrial(k, rng.normal(10.0, 2.0, 1000)) for k in range(20)]
    res = threshold_from_sequences(tr, 1e5, 0)
    assert res.method == "TailFit" and res.diagnostics["flagged"] == 0.0
    assert res.threshold == pytest.approx(10 + 2 * stats.norm.ppf(1 - 1e-5), rel=0.03)


def test_tail_fit_flags_and_refuses_far_extrapolation(rng):
    tr = [SignFlipTrial(1, rng.normal(size=200))]
    assert threshold_from_sequences(tr, 1e9, 0).diagnostics["flagged"] == 1.0
    with pytest.raises(CalibrationError):
        threshold_from_sequences(tr, 1e30, 0)


def test_gaussian_tail_fit_on_exact_quantiles():
    n = 10_000
    x = 3.0 + 0.5 * stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    loc, scale = gaussian_tail_fit(x)
    assert loc == pytest.approx(3.0, abs=1e-6) and scale == pytest.approx(0.5, abs=1e-6)


def test_threshold_rejects_bad_gamma():
    with pytest.raises(ConfigError):
        threshold_from_sequences([SignFlipTrial(1, np.ones(5))], 1.0, 0)


# ---------------------------------------------------------------- run-length approximation

def test_zeta_values():
    assert zeta(1e-12) == 1.0
    assert zeta(1.0) == pytest.approx(0.5487, abs=1e-4)
    assert np.all(np.diff(zeta(np.linspace(1e-3, 10, 400))) < 0)


def test_arl_increasing_beyond_the_minimiser():
    mu, sd, w = 80.0, 5.0, 20
    lo = arl_minimizer(mu, sd, w)
    bs = np.linspace(lo, mu + 20 * sd, 200)
    vals = [log_arl_approx(ArlApproxInput(b, mu, sd, w)) for b in bs]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("gap", [2.0, 5.0, 10.0, 20.0])
def test_doubling_sigma_lowers_the_arl(gap):
    a = ArlApproxInput(80 + gap, 80.0, 5.0, 20)
    b = ArlApproxInput(80 + gap, 80.0, 10.0, 20)
    assert b.kappa < a.kappa and arl_approx(b) < arl_approx(a)


@given(st.floats(20, 1e8), st.floats(0.1, 1e4), st.floats(0.01, 100), st.integers(2, 200))
def test_inversion_round_trip(gamma, mu, sd, w):
    try:
        b = threshold_from_arl(gamma, (mu, sd), w)
    except CalibrationError:
        return
    assert math.log(arl_approx(ArlApproxInput(b, mu, sd, w))) == pytest.approx(math.log(gamma),
                                                                               abs=1e-4)


def test_inversion_monotone_in_gamma_and_window():
    bs = [threshold_from_arl(g, (80.0, 5.0), 20) for g in (100, 1e3, 1e4, 1e5)]
    assert bs == sorted(bs)
    # per-entry moments follow the window size; the aggregate threshold falls
    ws = [threshold_from_arl(5000, prechange_moments("sum", 50, w, 100, "analytic",
                                                     variant="shewhart"), w)
          for w in (5, 10, 20, 50, 100)]
    assert all(a > b for a, b in zip(ws, ws[1:]))


def test_inversion_below_reachable_range():
    with pytest.raises(CalibrationError):
        threshold_from_arl(1.5, (80.0, 5.0), 20)
    with pytest.raises(ConfigError):
        log_arl_approx(ArlApproxInput(79.0, 80.0, 5.0, 20))


# ---------------------------------------------------------------- moments

@pytest.mark.parametrize("rho", [0.0, 0.5, -0.3])
def test_fourth_central_moment_by_monte_carlo(rho):
    L = np.linalg.cholesky([[1.0, rho], [rho, 1.0]])
    z = np.random.default_rng(5).standard_normal((2_000_000, 2)) @ L.T
    v = (z[:, 0] * z[:, 1] - rho) ** 4
    assert abs(v.mean() - gaussian_product_fourth_central(rho)) < 3 * v.std() / math.sqrt(v.size)


def test_entry_moments_by_monte_carlo():
    rng = np.random.default_rng(8)
    H, w, reps = 100, 20, 100_000
    a = (rng.standard_normal((reps, H + 1)) * rng.standard_normal((reps, H + 1))).mean(1)
    c = (rng.standard_normal((reps, w + 1)) * rng.standard_normal((reps, w + 1))).mean(1)
    v = (a - c) ** 2
    mu, sd = entry_moments(MomentSpec.gaussian(0.0), H, w)
    assert mu == pytest.approx(1 / 101 + 1 / 21)
    assert abs(v.mean() - mu) < 3 * v.std() / math.sqrt(reps)
    assert sd == pytest.approx(v.std(), rel=0.02)


def test_analytic_and_empirical_sum_moments_agree():
    mu_a, sd_a = prechange_moments("sum", 10, 20, 100, "analytic")
    mu_e, sd_e = empirical_moments("sum", 10, 20, 100, n_mc=4000, rng=np.random.default_rng(4),
                                   mode="known")
    assert abs(mu_a - mu_e) < 3 * sd_e / math.sqrt(4000)
    assert sd_e > 0


def test_window_moments_are_weighted():
    mu_s, sd_s = prechange_moments("sum", 50, 20, 100, "analytic", variant="shewhart")
    mu_w, sd_w = prechange_moments("sum", 50, 20, 100, "analytic", variant="window")
    assert mu_w / mu_s == pytest.approx(2000 / 120) and sd_w / sd_s == pytest.approx(2000 / 120)
    with pytest.raises(ConfigError):
        prechange_moments("combined", 50, 20, 100)


def test_empirical_moments_from_data(rng):
    data = rng.standard_normal((400, 6))
    mu, sd = empirical_moments("max", 6, 10, 50, n_mc=50, rng=rng, data=data)
    assert mu > 0 and sd > 0
    with pytest.raises(ConfigError):
        empirical_moments("max", 6, 10, 50, n_mc=5, rng=rng, data=data[:40])


@pytest.mark.parametrize("kind,variant,target", [("sum", "shewhart", 78.2469),
                                                 ("sum", "window", 1338.8)])
def test_theoretical_sum_thresholds_near_reference_values(kind, variant, target):
    b = theoretical_threshold(kind, variant, 5000, 50, 20, 100).threshold
    assert abs(b / target - 1) <= 0.05


@pytest.mark.xfail(strict=True, reason="Monte Carlo max moments invert to about 5.2% above "
                   "the reference value; the acceptance tolerance is 10%")
def test_theoretical_shewhart_max_near_reference_value():
    b = theoretical_threshold("max", "shewhart", 5000, 50, 20, 100, n_mc=8000,
                              rng=np.random.default_rng(20261014)).threshold
    assert abs(b / 0.9561 - 1) <= 0.05


# ---------------------------------------------------------------- delays

def test_edd_approx():
    assert edd_approx(306.25 * 50, SignalStrength(306.25, 0.25), "sum") == pytest.approx(50)
    s = SignalStrength(306.25, 0.25)
    assert edd_approx(10.0, s, "sum") <= edd_approx(10.0, s, "max")
    assert window_guidance(10.0, s) == pytest.approx(40.0)
    with pytest.raises(ConfigError):
        edd_approx(1.0, SignalStrength(0.0, 0.0), "sum")
