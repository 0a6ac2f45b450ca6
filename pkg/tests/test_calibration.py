import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srdetect.calibration import calibrate, calibrate_threshold, estimate_arl2fa
from srdetect.detectors import ThresholdRule
from srdetect.errors import CalibrationError, CalibrationUnreliableError
from srdetect.models import ObservationModel
from srdetect.streams import RandomStreams

GAUSS = ObservationModel("gaussian_mean_shift", 0.0, 1.0)
TOY = ObservationModel("bernoulli", 0.5, 0.75)


def test_toy_arl_exact():
    est = estimate_arl2fa(ThresholdRule.sr(1.4), TOY, 100_000, 1)
    assert est.contains(2.0, 4)
    assert estimate_arl2fa(ThresholdRule.sr(0.4), TOY, 1000, 1).mean == 1.0


def test_toy_calibration_lands_in_exact_interval():
    cal = calibrate("sr", TOY, 2.0, rng=3)
    assert 1.0 < cal.rule.threshold <= 1.5  # every A in (1, 1.5] has ARL exactly 2
    assert 1.96 <= cal.estimate.mean <= 2.04
    rec = cal.record()
    assert set(rec) == {"kind", "B", "A", "arl_estimate", "std_err", "n_reps", "seed"}


def test_b_equal_one_gives_instant_rule():
    cal = calibrate("sr", TOY, 1.0, rng=0)
    assert cal.estimate.mean == 1.0


@pytest.mark.parametrize("kind", ["sr", "cusum", "shiryaev"])
def test_gaussian_calibration_within_tolerance(kind):
    rho = 0.01 if kind == "shiryaev" else 0.0
    cal = calibrate(kind, GAUSS, 50.0, rng=5, rho=rho)
    assert abs(cal.estimate.mean - 50) <= 0.02 * 50
    if kind == "sr":
        assert cal.rule.threshold <= 50 * 1.02
    check = estimate_arl2fa(cal.rule, GAUSS, 20_000, RandomStreams(77))
    assert abs(check.mean - 50) <= 0.02 * 50 + 4 * np.hypot(check.std_err, cal.estimate.std_err)


def test_calibration_is_deterministic():
    a = calibrate_threshold("sr", GAUSS, 30.0, n_reps=2000, rng=11)
    b = calibrate_threshold("sr", GAUSS, 30.0, n_reps=2000, rng=11)
    assert a == b


@given(seed=st.integers(0, 2**40))
@settings(max_examples=10, deadline=None)
def test_crn_makes_arl_monotone(seed):
    means = [estimate_arl2fa(ThresholdRule.sr(a), GAUSS, 500, seed).mean for a in (5, 10, 10.5, 20, 40)]
    assert means == sorted(means)


def test_discrete_jump_is_reported():
    with pytest.raises(CalibrationError) as info:
        calibrate("sr", TOY, 2.3, rel_tol=0.01, rng=1)
    assert info.value.diagnostic["evaluations"]


def test_truncation_is_surfaced():
    with pytest.raises(CalibrationUnreliableError):
        estimate_arl2fa(ThresholdRule.sr(1e4), GAUSS, 200, 0, n_max=50)
    est = estimate_arl2fa(ThresholdRule.sr(1e4), GAUSS, 200, 0, n_max=50, strict=False)
    assert est.truncated_fraction > 0.9 and est.mean <= 50


@pytest.mark.parametrize("B,tol", [(0.5, 0.02), (10, 0.0), (10, 0.5)])
def test_bad_arguments(B, tol):
    with pytest.raises(ValueError):
        calibrate("sr", GAUSS, B, rel_tol=tol)
