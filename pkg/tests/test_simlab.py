import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from corrdetect.corrstat import build_reference
from corrdetect.model import ConfigError, DetectorConfig
from corrdetect.simlab import (
    CusumOracle,
    ExperimentResult,
    ScenarioSpec,
    admissible_block_parameters,
    block_matrices,
    case_matrices,
    cusum_brute_force,
    cusum_factory,
    cusum_path,
    cusum_step,
    cusum_threshold,
    dense_level,
    detector_factory,
    estimation_error_study,
    gaussian_kl,
    gen_stream,
    max_eigen_ratio,
    replication_seeds,
    run_arl,
    run_edd,
)


def test_case_one_small():
    R0, R1 = case_matrices(1, 3, 0.5)
    assert np.array_equal(R0, np.eye(3))
    assert np.allclose(R1[np.tril_indices(3, -1)], 0.5)


def test_case_three_block_size():
    R0, R1 = case_matrices(3, 50)
    changed = np.argwhere(~np.isclose(R0, R1))
    assert changed.max() == 2
    assert R0[1, 0] == -0.3 and R1[1, 0] == 0.9


@pytest.mark.parametrize("case_id,p,want", [
    (1, 50, 1.0), (2, 50, 600 / 2450), (3, 50, 6 / 2450),
    (4, 50, (600 + 600) / 2450)])
def test_dense_levels(case_id, p, want):
    assert dense_level(case_id, p) == pytest.approx(want)
    R0, R1 = case_matrices(case_id, p)
    i, j = np.tril_indices(p, -1)
    assert np.mean(~np.isclose(R0[i, j], R1[i, j])) == pytest.approx(want)


def test_case_two_is_about_a_quarter_for_large_p():
    assert dense_level(2, 1000) == pytest.approx(0.25, abs=0.002)


def test_invalid_scenarios():
    with pytest.raises(ConfigError):
        case_matrices(3, 300)
    with pytest.raises(ConfigError):
        case_matrices(5, 10)
    with pytest.raises(ConfigError):
        case_matrices(2, 3)
    with pytest.raises(ConfigError):
        ScenarioSpec(np.eye(3), np.eye(4))
    with pytest.raises(ConfigError):
        ScenarioSpec(np.eye(3), np.eye(3), "t", df=2.0)


def test_block_parameters_fall_in_the_eigen_band():
    for n in (2, 20):
        r0, r1 = admissible_block_parameters(60, n)
        lam = max_eigen_ratio(*block_matrices(60, n, r0, r1))
        assert 5.0 <= lam <= 8.0
    assert admissible_block_parameters(60, 20) == (0.0, 0.25)
    r0, r1 = admissible_block_parameters(60, 2)
    assert r0 == pytest.approx(0.65) and r1 == pytest.approx(-0.75)


def test_post_change_only_when_nu_is_one():
    spec = ScenarioSpec.case(1, 6, 0.8)
    a = gen_stream(spec, 1, 30, np.random.default_rng(0))
    b = spec.sample(30, np.random.default_rng(0), post=True)
    assert np.array_equal(a, b)
    c = gen_stream(spec, 11, 30, np.random.default_rng(0))
    g = np.random.default_rng(0)
    assert np.array_equal(c, np.vstack([spec.sample(10, g), spec.sample(20, g, post=True)]))


def test_identity_gaussian_is_uncorrelated():
    n = 20_000
    X = ScenarioSpec.case(1, 5).sample(n, np.random.default_rng(1))
    C = np.corrcoef(X, rowvar=False)
    assert np.max(np.abs(C[np.tril_indices(5, -1)])) < 4 / math.sqrt(n)


def test_student_t_variance_and_kurtosis():
    spec = ScenarioSpec.case(1, 3, distribution="t", df=5.0)
    x = spec.sample(1_000_000, np.random.default_rng(3))[:, 0]
    assert x.var() == pytest.approx(1.0, abs=0.01)
    assert stats.kurtosis(x, fisher=False) == pytest.approx(9.0, abs=2.0)


def test_post_change_sample_correlation():
    spec = ScenarioSpec.case(2, 8, 0.6)
    X = spec.sample(50_000, np.random.default_rng(2), post=True)
    C = np.corrcoef(X, rowvar=False)
    assert np.allclose(C, spec.R1, atol=0.03)


# ---------------------------------------------------------------- CUSUM

def test_cusum_identical_laws_stays_at_zero(rng):
    ora = CusumOracle.from_matrices(np.eye(3), np.eye(3), b=0.1)
    for x in rng.standard_normal((50, 3)):
        W, alarm = cusum_step(ora, x)
        assert W == pytest.approx(0.0, abs=1e-12) and not alarm


def test_cusum_recursion_example():
    assert cusum_path(np.array([1.0, -2.0, 3.0])).tolist() == [1.0, -1.0, 3.0]


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=40))
def test_cusum_recursion_equals_brute_force(llrs):
    a = cusum_path(np.array(llrs))
    assert np.allclose(a, cusum_brute_force(np.array(llrs)), atol=1e-9)


def test_cusum_drift_signs_match_kl():
    spec = ScenarioSpec.case(2, 6, 0.5)
    ora = CusumOracle.from_scenario(spec)
    rng = np.random.default_rng(4)
    n = 200_000
    l0 = ora.llr(spec.sample(n, rng))
    l1 = ora.llr(spec.sample(n, rng, post=True))
    d01, d10 = gaussian_kl(spec.R0, spec.R1), gaussian_kl(spec.R1, spec.R0)
    assert abs(l0.mean() + d01) < 3 * l0.std() / math.sqrt(n)
    assert abs(l1.mean() - d10) < 3 * l1.std() / math.sqrt(n)
    assert d01 > 0 and d10 > 0


def test_cusum_needs_gaussian():
    with pytest.raises(ConfigError):
        CusumOracle.from_scenario(ScenarioSpec.case(1, 4, distribution="t"))


def test_cusum_threshold_hits_target_roughly():
    spec = ScenarioSpec.case(2, 6, 0.5)
    b, info = cusum_threshold(spec, 200, paths=200, rng=np.random.default_rng(1))
    assert 0 < b <= math.log(200)
    res = run_arl(cusum_factory(spec, b), spec, 200, 5000, seed=2)
    assert 0.6 * 200 < res.mean < 1.6 * 200


# ---------------------------------------------------------------- experiments

def test_replication_seeds_are_reproducible():
    assert np.array_equal(replication_seeds(7, 5), replication_seeds(7, 5))
    assert not np.array_equal(replication_seeds(7, 5), replication_seeds(8, 5))


def test_experiment_csv_summary():
    res = ExperimentResult("EDD", [3, 5], [False, True], [11, 12], "x")
    lines = res.to_csv().splitlines()
    assert lines[0] == "seed,stopping_time,censored"
    assert lines[2] == "12,5,1"
    assert lines[-1].startswith("# EDD,mean=4")
    assert res.std_error == pytest.approx(1.0)


def _small_detector(b):
    spec = ScenarioSpec.case(1, 5, 0.7)
    ref = build_reference(spec.sample(41, np.random.default_rng(0)))
    return spec, detector_factory(ref, DetectorConfig(w=5, H=40, threshold_sum=b))


def test_zero_threshold_stops_at_first_evaluation():
    spec, fac = _small_detector(1e-300)
    res = run_arl(fac, spec, 3, 100)
    assert res.stopping_times.tolist() == [2, 2, 2]


def test_run_edd_is_deterministic_and_monotone_in_b():
    means = []
    for b in (2.0, 5.0, 10.0):
        spec, fac = _small_detector(b)
        a = run_edd(fac, spec, 20, seed=3)
        again = run_edd(fac, spec, 20, seed=3)
        assert np.array_equal(a.stopping_times, again.stopping_times)
        means.append(a.mean)
    assert means == sorted(means)


def test_huge_change_is_detected_quickly():
    spec = ScenarioSpec.case(3, 50)
    ref = build_reference(spec.sample(101, np.random.default_rng(0)))
    fac = detector_factory(ref, DetectorConfig(kind="max", w=10, H=100, threshold_max=0.5))
    assert run_edd(fac, spec, 20, seed=1).mean <= 10


def test_censoring_is_reported():
    spec, fac = _small_detector(1e9)
    with pytest.raises(ConfigError):
        run_arl(fac, spec, 2, 20)


def test_estimation_error_ordering():
    out = estimation_error_study(100, 20, np.eye(100), 50, np.random.default_rng(0))
    assert out["knockoff"][0] < out["original"][0] < out["smote"][0]


@pytest.mark.slow
def test_signflip_threshold_gives_target_run_length():
    from corrdetect.calibrate import signflip_sequences, threshold_from_sequences

    # sign flips need enough coordinates to act as a resampler
    spec = ScenarioSpec.case(1, 50)
    rng = np.random.default_rng(20261014)
    ref = build_reference(spec.sample(101, rng))
    cfg = DetectorConfig(variant="shewhart", w=20, H=100)
    trials = signflip_sequences(spec.sample(1000, rng), ref, cfg, 1000, rng)
    b = threshold_from_sequences(trials, 5000, 20).threshold
    res = run_arl(detector_factory(ref, cfg.replace(threshold_sum=b)), spec, 30, 60_000, seed=9)
    assert 0.5 * 5000 <= res.mean <= 2 * 5000
